//! Mini-batch training of the monotonic calibrator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::logit;
use crate::binning::fit_bins;
use crate::dataset::Dataset;
use crate::error::{McnError, Result};
use crate::nn::{adam_step, AdamState};

use super::loss::{loss_gradients, total_loss};
use super::{McnetModel, TrainConfig};

/// End-of-epoch loss terms evaluated over the full training set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub logloss: f64,
    pub order: f64,
    pub balance: f64,
    pub total: f64,
    pub clamp_rate: f64,
}

/// Fits equal-frequency bins on the dataset scores, then runs
/// `epochs x batches` of Adam updates on all per-bin parameters.
/// Deterministic for a fixed config (the shuffle order derives from the
/// seed). The returned history holds one entry per epoch.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(McnetModel, Vec<EpochStats>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(McnError::InvalidInput("training dataset is empty".into()));
    }
    if config.aux_enabled && dataset.feature_dim == 0 {
        return Err(McnError::InvalidConfig(
            "auxiliary mode needs a dataset with feature columns".into(),
        ));
    }

    // binning space: probability scores on [0,1), or logits widened by 1e-3
    let partition = if config.aux_enabled {
        let logits: Vec<f64> = dataset.samples.iter().map(|s| logit(s.score)).collect();
        let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-3;
        let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-3;
        fit_bins(&logits, config.bins, lo, hi)?
    } else {
        fit_bins(&dataset.scores(), config.bins, 0.0, 1.0)?
    };

    let mut model = McnetModel::init(partition, dataset.field_count, dataset.feature_dim, config)?;
    let mut params = model.flatten_params();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad_flat = Vec::with_capacity(params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset.samples[i].clone()));
            let (terms, grads) = loss_gradients(
                &model,
                &batch,
                config.balance_weight,
                config.order_weight,
            )
            .map_err(|e| McnError::Training(format!("epoch {epoch}: {e}")))?;
            if !terms.total.is_finite() {
                return Err(McnError::Training(format!(
                    "non-finite loss at epoch {epoch}: {terms:?}"
                )));
            }
            grads.flatten_into(&mut grad_flat);
            adam_step(&mut params, &grad_flat, &mut adam)
                .map_err(|e| McnError::Training(format!("epoch {epoch}: {e}")))?;
            model.unflatten_params(&params)?;
        }
        if !model.params_finite() {
            return Err(McnError::Training(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        let terms = total_loss(
            &model,
            &dataset.samples,
            config.balance_weight,
            config.order_weight,
        )?;
        history.push(EpochStats {
            epoch,
            logloss: terms.logloss,
            order: terms.order,
            balance: terms.balance,
            total: terms.total,
            clamp_rate: terms.clamp_rate,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::mcnet::ContextMode;
    use rand::Rng;

    fn identity_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Sample> = (0..n)
            .map(|_| {
                let q: f64 = rng.random_range(0.02..0.98);
                Sample::new(q, rng.random::<f64>() < q, 0)
            })
            .collect();
        Dataset::new(samples, 1).unwrap()
    }

    fn desk_config(seed: u64) -> TrainConfig {
        TrainConfig {
            bins: 8,
            quad_steps: 16,
            learning_rate: 0.02,
            batch_size: 256,
            epochs: 10,
            embed_dim: 4,
            f1_hidden: vec![8],
            f2_hidden: vec![8],
            context_mode: ContextMode::None,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn recovers_identity_map() {
        let data = identity_dataset(6000, 3);
        let (model, history) = train(&data, &desk_config(7)).unwrap();
        let mut total = 0.0f64;
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let p = model.calibrate_score(s, 0).unwrap();
            total += (p - s).abs();
        }
        let mean_dev = total / 99.0;
        assert!(mean_dev < 0.05, "mean |calibrated - score| = {mean_dev}");
        assert!(
            history.last().unwrap().logloss <= history[0].logloss,
            "{history:?}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let data = identity_dataset(800, 5);
        let mut cfg = desk_config(11);
        cfg.epochs = 2;
        let (a, ha) = train(&data, &cfg).unwrap();
        let (b, hb) = train(&data, &cfg).unwrap();
        let pa = a.flatten_params();
        let pb = b.flatten_params();
        assert_eq!(pa.len(), pb.len());
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(ha, hb);
    }

    #[test]
    fn rejects_empty_dataset() {
        let data = Dataset {
            samples: vec![],
            field_count: 1,
            feature_dim: 0,
        };
        assert!(train(&data, &desk_config(1)).is_err());
    }

    #[test]
    fn aux_mode_trains_and_calibrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<Sample> = (0..1500)
            .map(|_| {
                let q: f64 = rng.random_range(0.05..0.95);
                Sample::with_features(q, rng.random::<f64>() < q, 0, vec![q - 0.5, rng.random()])
            })
            .collect();
        let data = Dataset::new(samples, 1).unwrap();
        let mut cfg = desk_config(13);
        cfg.aux_enabled = true;
        cfg.aux_hidden = vec![4];
        cfg.epochs = 2;
        cfg.bins = 4;
        let (model, history) = train(&data, &cfg).unwrap();
        assert!(model.is_logit_space());
        assert_eq!(history.len(), 2);
        let p = model.calibrate_sample(&data.samples[0]).unwrap();
        assert!(p > 0.0 && p < 1.0);
        // scores must come with features in aux mode
        assert!(model.calibrate_score(0.5, 0).is_err());
    }
}
