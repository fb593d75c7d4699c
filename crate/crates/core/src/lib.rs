//! Post-hoc calibration of binary-classifier probability predictions.
//!
//! The centerpiece is a monotonic neural calibrator: scores are split into
//! equal-frequency bins and each bin learns a strictly increasing map built
//! as the integral of a positive network plus a context-dependent bias,
//! trained with Clenshaw-Curtis quadrature for both the forward pass and
//! the gradient pass. Classical calibrators (histogram binning, isotonic
//! regression, Platt scaling, smoothed isotonic regression) and calibration
//! metrics (PCOC, F-RCE, AUC, ECE) ship alongside it, together with a
//! synthetic data generator with known ground-truth calibration curves.

pub mod baselines;
pub mod binning;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod mcnet;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod quadrature;
pub mod report;
pub mod synth;

pub use binning::{fit_bins, BinPartition};
pub use dataset::{load_dataset, save_dataset, Dataset, Sample};
pub use error::{McnError, Result};
pub use mcnet::{train, ContextMode, McnetModel, TrainConfig};
pub use metrics::MetricsReport;
pub use quadrature::CcqRule;
