#ifndef MCNET_H
#define MCNET_H

/* Generated by cbindgen from mcnet-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum McnStatus {
  MCN_STATUS_OK = 0,
  // A required pointer argument was NULL.
  MCN_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MCN_STATUS_INVALID_UTF8 = 2,
  // File could not be read or written.
  MCN_STATUS_IO = 3,
  // Dataset, config, or model text failed to parse.
  MCN_STATUS_PARSE = 4,
  // Arguments were structurally invalid (bad config, shape mismatch,
  // unknown field, score out of range).
  MCN_STATUS_INVALID_ARGUMENT = 5,
  // Training failed (non-finite loss or rejected step).
  MCN_STATUS_TRAINING_FAILED = 6,
} McnStatus;

typedef struct McnCalibrator McnCalibrator;

typedef struct McnDataset McnDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL when no
// failure has been recorded. The pointer stays valid until the next
// failing call on the same thread.
const char *mcn_last_error_message(void);

// Frees a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must have been returned by an `mcn_*` function and not freed yet.
void mcn_string_free(char *s);

// Loads a dataset from a CSV file (`score,label,field[,f0,...]`).
//
// # Safety
// `path` must be a readable NUL-terminated string; `out` must be a valid
// pointer to a handle slot.
enum McnStatus mcn_dataset_load(const char *path, struct McnDataset **out);

// Generates a synthetic dataset from `key = value` config text
// (keys: n, fields, distortions, distribution, seed, feature_dim).
//
// # Safety
// `config` must be a NUL-terminated string; `out` must be valid.
enum McnStatus mcn_dataset_generate(const char *config, struct McnDataset **out);

// Writes a dataset back to CSV.
//
// # Safety
// `dataset` must be a live handle; `path` a NUL-terminated string.
enum McnStatus mcn_dataset_save(const struct McnDataset *dataset, const char *path);

// Number of samples; 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t mcn_dataset_len(const struct McnDataset *dataset);

// Declared field count; 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t mcn_dataset_field_count(const struct McnDataset *dataset);

// Releases a dataset handle. NULL is a no-op.
//
// # Safety
// `dataset` must have come from this library and not be freed twice.
void mcn_dataset_free(struct McnDataset *dataset);

// Fits a calibrator on a validation dataset. `calibrator` is one of
// histogram, isotonic, platt, sir, mcnet-none, mcnet-field. `config` is
// optional (`NULL` for defaults) `key = value` text over the training
// fields (bins, quad_steps, learning_rate, ...).
//
// # Safety
// `dataset` must be a live handle; strings NUL-terminated; `out` valid.
enum McnStatus mcn_train(const struct McnDataset *dataset,
                         const char *calibrator,
                         const char *config,
                         struct McnCalibrator **out);

// Loads a saved model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid.
enum McnStatus mcn_calibrator_load(const char *path, struct McnCalibrator **out);

// Saves a calibrator to the versioned model format.
//
// # Safety
// `calibrator` must be a live handle; `path` a NUL-terminated string.
enum McnStatus mcn_calibrator_save(const struct McnCalibrator *calibrator, const char *path);

// Static name of the calibrator type ("histogram", "mcnet", ...). NULL
// for a NULL handle.
//
// # Safety
// `calibrator` must be NULL or a live handle.
const char *mcn_calibrator_type(const struct McnCalibrator *calibrator);

// Releases a calibrator handle. NULL is a no-op.
//
// # Safety
// `calibrator` must have come from this library and not be freed twice.
void mcn_calibrator_free(struct McnCalibrator *calibrator);

// Calibrates `len` scores with their field ids, writing calibrated
// probabilities to `out`. Models trained in auxiliary mode need
// [`mcn_calibrate_with_features`] instead.
//
// # Safety
// `scores`, `fields`, and `out` must point to `len` readable (writable
// for `out`) elements; `calibrator` must be a live handle.
enum McnStatus mcn_calibrate(const struct McnCalibrator *calibrator,
                             const double *scores,
                             const uint64_t *fields,
                             size_t len,
                             double *out);

// Calibrates scores with per-sample feature vectors for auxiliary-mode
// models. `features` is row-major `len x feature_dim` (pass NULL and 0
// when the model takes no features).
//
// # Safety
// All array pointers must cover the sizes implied by `len` and
// `feature_dim`; `calibrator` must be a live handle.
enum McnStatus mcn_calibrate_with_features(const struct McnCalibrator *calibrator,
                                           const double *scores,
                                           const uint64_t *fields,
                                           const double *features,
                                           size_t feature_dim,
                                           size_t len,
                                           double *out);

// Evaluates a calibrator on a dataset and returns the flat key-value
// report text (free with [`mcn_string_free`]).
//
// # Safety
// `calibrator` and `dataset` must be live handles; `report_out` valid.
enum McnStatus mcn_evaluate(const struct McnCalibrator *calibrator,
                            const struct McnDataset *dataset,
                            char **report_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCNET_H */
