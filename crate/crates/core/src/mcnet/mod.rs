//! The monotonic neural calibrator.
//!
//! Scores are split into equal-frequency bins; each bin k owns a strictly
//! increasing calibration function
//!
//! ```text
//!   f_k(x, c) = integral_0^x f1_k(t, h_k(c)) dt + f2_k(h_k(c))
//! ```
//!
//! where `f1_k` has a sigmoid output (so the integrand, and hence the
//! slope, stays strictly positive), `f2_k` is a context-dependent bias,
//! and `h_k` embeds the field id (all-zero in context-free mode). The
//! integral is evaluated by Clenshaw-Curtis quadrature; training
//! integrates gradients the same way instead of differentiating stored
//! quadrature state.

mod loss;
mod train;

pub use loss::{
    balance_penalty, logloss, loss_gradients, order_penalty, total_loss, LossTerms, ModelGrads,
};
pub use train::{train, EpochStats};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::logit;
use crate::binning::BinPartition;
use crate::dataset::Sample;
use crate::error::{McnError, Result};
use crate::nn::{sigmoid, Activation, DenseNet, EmbeddingTable};
use crate::quadrature::CcqRule;

/// Whether the per-bin functions see a context embedding or zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    None,
    Field,
}

/// Lower integration bound of each bin's integral term. The default
/// integrates from zero; `BinLeft` starts at the bin's left boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinLower {
    #[default]
    Zero,
    BinLeft,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Number of equal-frequency bins (K).
    pub bins: usize,
    /// Quadrature steps per integral (T).
    pub quad_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the order-preserving penalty (beta).
    pub order_weight: f64,
    /// Weight of the field-balance penalty (alpha).
    pub balance_weight: f64,
    pub seed: u64,
    /// Context embedding dimension (d).
    pub embed_dim: usize,
    pub f1_hidden: Vec<usize>,
    pub f2_hidden: Vec<usize>,
    pub context_mode: ContextMode,
    /// Adds the auxiliary feature network and moves the calibrator to
    /// logit space.
    pub aux_enabled: bool,
    pub aux_hidden: Vec<usize>,
    /// Calibrated outputs are clamped to `[clamp, 1 - clamp]`.
    pub clamp: f64,
    pub bin_lower: BinLower,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bins: 20,
            quad_steps: 50,
            learning_rate: 1e-5,
            batch_size: 2048,
            epochs: 10,
            order_weight: 1.0,
            balance_weight: 1.0,
            seed: 42,
            embed_dim: 128,
            f1_hidden: vec![128, 128],
            f2_hidden: vec![128, 128],
            context_mode: ContextMode::None,
            aux_enabled: false,
            aux_hidden: vec![128],
            clamp: 1e-6,
            bin_lower: BinLower::Zero,
        }
    }
}

impl TrainConfig {
    /// Default learning rate when the context mode is `Field` (1e-4
    /// versus 1e-5 for context-free).
    pub const FIELD_LEARNING_RATE: f64 = 1e-4;

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(McnError::InvalidConfig("bins must be >= 1".into()));
        }
        if self.quad_steps < 2 {
            return Err(McnError::InvalidConfig("quad_steps must be >= 2".into()));
        }
        if self.batch_size == 0 {
            return Err(McnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.order_weight < 0.0 || self.balance_weight < 0.0 {
            return Err(McnError::InvalidConfig(
                "penalty weights must be non-negative".into(),
            ));
        }
        if self.embed_dim == 0 {
            return Err(McnError::InvalidConfig("embed_dim must be >= 1".into()));
        }
        if !(self.clamp > 0.0 && self.clamp < 0.5) {
            return Err(McnError::InvalidConfig(
                "clamp must lie strictly between 0 and 0.5".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(McnError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One bin's calibration function: derivative net, bias net, and context
/// embedding table (absent in context-free mode).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct McfBin {
    pub f1: DenseNet,
    pub f2: DenseNet,
    pub h: Option<EmbeddingTable>,
}

/// A fitted (or freshly initialized) monotonic calibration network.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct McnetModel {
    pub(crate) partition: BinPartition,
    pub(crate) bins: Vec<McfBin>,
    pub(crate) context_mode: ContextMode,
    pub(crate) field_count: usize,
    pub(crate) embed_dim: usize,
    pub(crate) quad: CcqRule,
    pub(crate) clamp: f64,
    pub(crate) bin_lower: BinLower,
    /// True when the calibrator operates on logits (auxiliary mode).
    pub(crate) logit_space: bool,
    pub(crate) aux: Option<DenseNet>,
    #[serde(skip)]
    pub(crate) zero_embed: Vec<f64>,
}

impl McnetModel {
    /// Random initialization over a fixed partition. `feature_dim` is only
    /// consulted when `config.aux_enabled` is set.
    pub fn init(
        partition: BinPartition,
        field_count: usize,
        feature_dim: usize,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if config.context_mode == ContextMode::Field && field_count == 0 {
            return Err(McnError::InvalidConfig(
                "field context mode needs at least one field".into(),
            ));
        }
        let d = config.embed_dim;
        let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
        let mut bins = Vec::with_capacity(partition.bin_count());
        for _ in 0..partition.bin_count() {
            let mut f1_dims = vec![1 + d];
            f1_dims.extend(&config.f1_hidden);
            f1_dims.push(1);
            let mut f1_acts = vec![Activation::Relu; config.f1_hidden.len()];
            f1_acts.push(Activation::Sigmoid);
            let f1 = DenseNet::init(&f1_dims, &f1_acts, seeder.random())?;

            let mut f2_dims = vec![d];
            f2_dims.extend(&config.f2_hidden);
            f2_dims.push(1);
            let mut f2_acts = vec![Activation::Relu; config.f2_hidden.len()];
            f2_acts.push(Activation::Identity);
            let f2 = DenseNet::init(&f2_dims, &f2_acts, seeder.random())?;

            let h = match config.context_mode {
                ContextMode::None => None,
                ContextMode::Field => Some(EmbeddingTable::init(field_count, d, seeder.random())?),
            };
            bins.push(McfBin { f1, f2, h });
        }
        let aux = if config.aux_enabled {
            if feature_dim == 0 {
                return Err(McnError::InvalidConfig(
                    "auxiliary mode needs samples with features".into(),
                ));
            }
            let mut aux_dims = vec![feature_dim];
            aux_dims.extend(&config.aux_hidden);
            aux_dims.push(1);
            let mut aux_acts = vec![Activation::Relu; config.aux_hidden.len()];
            aux_acts.push(Activation::Identity);
            Some(DenseNet::init(&aux_dims, &aux_acts, seeder.random())?)
        } else {
            None
        };
        Ok(McnetModel {
            partition,
            bins,
            context_mode: config.context_mode,
            field_count,
            embed_dim: d,
            quad: CcqRule::new(config.quad_steps)?,
            clamp: config.clamp,
            bin_lower: config.bin_lower,
            logit_space: config.aux_enabled,
            aux,
            zero_embed: vec![0.0; d],
        })
    }

    pub fn partition(&self) -> &BinPartition {
        &self.partition
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[McfBin] {
        &self.bins
    }

    pub fn context_mode(&self) -> ContextMode {
        self.context_mode
    }

    pub fn field_count(&self) -> usize {
        self.field_count
    }

    pub fn clamp_epsilon(&self) -> f64 {
        self.clamp
    }

    pub fn quad_rule(&self) -> &CcqRule {
        &self.quad
    }

    pub fn aux_net(&self) -> Option<&DenseNet> {
        self.aux.as_ref()
    }

    pub fn is_logit_space(&self) -> bool {
        self.logit_space
    }

    /// Rebuilds the transient zero-embedding buffer (needed after
    /// deserialization, which skips it).
    pub(crate) fn restore_transients(&mut self) {
        self.zero_embed = vec![0.0; self.embed_dim];
    }

    /// Context embedding for bin `k` and `field`; the all-zero vector in
    /// context-free mode.
    pub(crate) fn embedding(&self, k: usize, field: usize) -> Result<&[f64]> {
        match (&self.context_mode, &self.bins[k].h) {
            (ContextMode::None, _) => Ok(&self.zero_embed),
            (ContextMode::Field, Some(table)) => table.lookup(field),
            (ContextMode::Field, None) => Err(McnError::InvalidConfig(
                "field mode without embedding table".into(),
            )),
        }
    }

    pub(crate) fn lower_bound(&self, k: usize) -> f64 {
        match self.bin_lower {
            BinLower::Zero => 0.0,
            BinLower::BinLeft => self.partition.boundaries()[k],
        }
    }

    /// Un-clamped output of bin `k`'s calibration function at `x` (in the
    /// model's native space) with an explicit embedding.
    pub(crate) fn bin_raw(&self, k: usize, x: f64, embed: &[f64]) -> Result<f64> {
        let bin = &self.bins[k];
        let mut input = vec![0.0; 1 + self.embed_dim];
        input[1..].copy_from_slice(embed);
        let integral = self.quad.integrate(self.lower_bound(k), x, |t| {
            input[0] = t;
            bin.f1.forward_scalar(&input).expect("f1 dims fixed at init")
        })?;
        let bias = bin.f2.forward_scalar(embed)?;
        Ok(integral + bias)
    }

    /// Un-clamped monotonic calibration function at `x` in the model's
    /// native space (probability score, or logit in auxiliary mode).
    pub fn mcf_raw(&self, x: f64, field: usize) -> Result<f64> {
        let k = self.partition.bin_index(x)?;
        self.check_field(field)?;
        let embed = self.embedding(k, field)?;
        self.bin_raw(k, x, embed)
    }

    fn check_field(&self, field: usize) -> Result<()> {
        if self.context_mode == ContextMode::Field && field >= self.field_count {
            return Err(McnError::UnknownField {
                field,
                count: self.field_count,
            });
        }
        Ok(())
    }

    /// Calibrated probability for a probability-space model. Errors when
    /// the model runs in auxiliary (logit) mode, which needs features.
    pub fn calibrate_score(&self, score: f64, field: usize) -> Result<f64> {
        if self.logit_space {
            return Err(McnError::InvalidInput(
                "auxiliary-mode model needs a sample with features".into(),
            ));
        }
        let raw = self.mcf_raw(score, field)?;
        Ok(raw.clamp(self.clamp, 1.0 - self.clamp))
    }

    /// Calibrated probability for one sample, dispatching on the model
    /// mode. In auxiliary mode the uncalibrated score is mapped to its
    /// logit (clamped into the binning range), calibrated there, shifted
    /// by the feature network, and squashed back through the sigmoid.
    pub fn calibrate_sample(&self, sample: &Sample) -> Result<f64> {
        if !self.logit_space {
            return self.calibrate_score(sample.score, sample.field);
        }
        let aux = self.aux.as_ref().expect("logit space implies aux");
        if sample.features.len() != aux.input_dim() {
            return Err(McnError::DimensionMismatch(format!(
                "sample has {} features, auxiliary net expects {}",
                sample.features.len(),
                aux.input_dim()
            )));
        }
        let l = self.clamp_into_range(logit(sample.score));
        let calibrated_logit = self.mcf_raw(l, sample.field)?;
        let shift = aux.forward_scalar(&sample.features)?;
        Ok(sigmoid(calibrated_logit + shift).clamp(self.clamp, 1.0 - self.clamp))
    }

    /// Element-wise calibration of a batch.
    pub fn calibrate_batch(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        samples.iter().map(|s| self.calibrate_sample(s)).collect()
    }

    /// Clamps a logit into the half-open binning range (auxiliary mode
    /// only; test scores may fall outside the range fit on validation).
    pub(crate) fn clamp_into_range(&self, x: f64) -> f64 {
        x.clamp(self.partition.lower(), self.partition.upper().next_down())
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for bin in &self.bins {
            n += bin.f1.param_count() + bin.f2.param_count();
            if let Some(h) = &bin.h {
                n += h.data().len();
            }
        }
        if let Some(aux) = &self.aux {
            n += aux.param_count();
        }
        n
    }

    /// All parameters in a stable order: per bin f1 layers (weights then
    /// bias), f2 layers, embedding rows; then the auxiliary net.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for bin in &self.bins {
            for net in [&bin.f1, &bin.f2] {
                for layer in net.layers() {
                    out.extend_from_slice(&layer.weights);
                    out.extend_from_slice(&layer.bias);
                }
            }
            if let Some(h) = &bin.h {
                out.extend_from_slice(h.data());
            }
        }
        if let Some(aux) = &self.aux {
            for layer in aux.layers() {
                out.extend_from_slice(&layer.weights);
                out.extend_from_slice(&layer.bias);
            }
        }
        out
    }

    /// Writes back a flat parameter vector produced by [`flatten_params`].
    pub fn unflatten_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(McnError::DimensionMismatch(format!(
                "{} parameters supplied, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let take = |dst: &mut [f64], pos: &mut usize| {
            dst.copy_from_slice(&flat[*pos..*pos + dst.len()]);
            *pos += dst.len();
        };
        for bin in &mut self.bins {
            for net in [&mut bin.f1, &mut bin.f2] {
                for layer in net.layers_mut() {
                    take(&mut layer.weights, &mut pos);
                    take(&mut layer.bias, &mut pos);
                }
            }
            if let Some(h) = &mut bin.h {
                take(h.data_mut(), &mut pos);
            }
        }
        if let Some(aux) = &mut self.aux {
            for layer in aux.layers_mut() {
                take(&mut layer.weights, &mut pos);
                take(&mut layer.bias, &mut pos);
            }
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.bins.iter().all(|b| {
            b.f1.params_finite()
                && b.f2.params_finite()
                && b.h.as_ref().is_none_or(|h| h.params_finite())
        }) && self.aux.as_ref().is_none_or(|a| a.params_finite())
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn constant_integrand_gives_linear_map() {
        // f1 = 0.5 everywhere, f2 = 0.1: f(s) = 0.5 s + 0.1
        let model = constant_model(vec![0.0, 1.0], 0.1);
        let p = model.calibrate_score(0.6, 0).unwrap();
        assert!((p - 0.4).abs() < 1e-12, "{p}");
    }

    #[test]
    fn within_bin_strictly_monotone() {
        let model = tiny_model(vec![0.0, 0.5, 1.0], ContextMode::Field, 3, 9);
        for field in 0..3 {
            let mut prev = model.mcf_raw(0.01, field).unwrap();
            for i in 1..50 {
                let s = 0.01 + 0.48 * i as f64 / 50.0;
                let v = model.mcf_raw(s, field).unwrap();
                assert!(v > prev, "field {field} s={s}: {v} <= {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn context_free_ignores_field_id() {
        let model = tiny_model(vec![0.0, 0.4, 1.0], ContextMode::None, 5, 3);
        for s in [0.1, 0.39, 0.4, 0.99] {
            let a = model.calibrate_score(s, 0).unwrap();
            let b = model.calibrate_score(s, 4).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn field_mode_rejects_unknown_field() {
        let model = tiny_model(vec![0.0, 1.0], ContextMode::Field, 2, 1);
        assert!(model.calibrate_score(0.5, 2).is_err());
        assert!(model.calibrate_score(0.5, 1).is_ok());
    }

    #[test]
    fn out_of_range_score_is_an_error() {
        let model = tiny_model(vec![0.0, 1.0], ContextMode::None, 1, 1);
        assert!(model.calibrate_score(1.0, 0).is_err());
        assert!(model.calibrate_score(-0.1, 0).is_err());
    }

    #[test]
    fn outputs_respect_clamp_interval() {
        let model = constant_model(vec![0.0, 1.0], 5.0); // raw output > 1
        let p = model.calibrate_score(0.5, 0).unwrap();
        assert_eq!(p, 1.0 - model.clamp_epsilon());
        let model = constant_model(vec![0.0, 1.0], -5.0);
        let p = model.calibrate_score(0.5, 0).unwrap();
        assert_eq!(p, model.clamp_epsilon());
    }

    #[test]
    fn batch_matches_per_sample_loop() {
        use rand::{Rng, SeedableRng};
        let model = tiny_model(vec![0.0, 0.3, 0.7, 1.0], ContextMode::Field, 4, 21);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Sample> = (0..1000)
            .map(|_| {
                Sample::new(
                    rng.random_range(0.001..0.999),
                    rng.random::<f64>() < 0.5,
                    rng.random_range(0..4),
                )
            })
            .collect();
        let batch = model.calibrate_batch(&samples).unwrap();
        for (s, &b) in samples.iter().zip(&batch) {
            assert_eq!(model.calibrate_sample(s).unwrap().to_bits(), b.to_bits());
        }
        // permuting inputs permutes outputs
        let mut rev = samples.clone();
        rev.reverse();
        let batch_rev = model.calibrate_batch(&rev).unwrap();
        assert_eq!(
            batch.iter().rev().map(|v| v.to_bits()).collect::<Vec<_>>(),
            batch_rev.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn flatten_unflatten_round_trip() {
        let mut model = tiny_model(vec![0.0, 0.5, 1.0], ContextMode::Field, 3, 13);
        let flat = model.flatten_params();
        assert_eq!(flat.len(), model.param_count());
        let mut perturbed = flat.clone();
        perturbed.iter_mut().for_each(|p| *p += 1.0);
        model.unflatten_params(&perturbed).unwrap();
        let back = model.flatten_params();
        assert_eq!(back, perturbed);
        model.unflatten_params(&flat).unwrap();
        assert_eq!(model.flatten_params(), flat);
    }

    #[test]
    fn init_is_deterministic() {
        let a = tiny_model(vec![0.0, 0.5, 1.0], ContextMode::Field, 3, 7);
        let b = tiny_model(vec![0.0, 0.5, 1.0], ContextMode::Field, 3, 7);
        assert_eq!(a.flatten_params(), b.flatten_params());
    }

    /// Auxiliary-mode model over logit space [-6, 6) with every weight
    /// zeroed; `f1_bias` sets the derivative net's output pre-activation
    /// and `aux_bias` the feature net's constant output.
    fn aux_model(f1_bias: f64, aux_bias: f64) -> McnetModel {
        let config = TrainConfig {
            bins: 2,
            quad_steps: 24,
            embed_dim: 2,
            f1_hidden: vec![4],
            f2_hidden: vec![4],
            aux_hidden: vec![4],
            context_mode: ContextMode::None,
            aux_enabled: true,
            seed: 77,
            ..TrainConfig::default()
        };
        let partition = BinPartition::new(vec![-6.0, 0.0, 6.0]).unwrap();
        let mut model = McnetModel::init(partition, 1, 2, &config).unwrap();
        let zeroed = vec![0.0; model.param_count()];
        model.unflatten_params(&zeroed).unwrap();
        for bin in &mut model.bins {
            bin.f1.layers_mut().last_mut().unwrap().bias[0] = f1_bias;
        }
        model.aux.as_mut().unwrap().layers_mut().last_mut().unwrap().bias[0] = aux_bias;
        model
    }

    #[test]
    fn aux_zero_net_and_saturated_f1_recover_the_raw_score() {
        // f1 pinned at sigmoid(40) ~ 1 makes the calibrated logit ~ the
        // raw logit; a zero aux net then reproduces the input score
        let model = aux_model(40.0, 0.0);
        for s in [0.1, 0.35, 0.6, 0.9] {
            let p = model
                .calibrate_sample(&Sample::with_features(s, true, 0, vec![0.3, -0.2]))
                .unwrap();
            assert!((p - s).abs() < 1e-9, "{s} -> {p}");
        }
    }

    #[test]
    fn aux_constant_shift_moves_output_monotonically() {
        let sample = Sample::with_features(0.3, false, 0, vec![0.5, 0.5]);
        let logit_in = crate::baselines::logit(0.3);
        let mut prev = 0.0;
        for (i, kappa) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
            let model = aux_model(40.0, kappa);
            let p = model.calibrate_sample(&sample).unwrap();
            let expect = sigmoid(model.mcf_raw(logit_in, 0).unwrap() + kappa);
            assert!((p - expect).abs() < 1e-12);
            if i > 0 {
                assert!(p > prev);
            }
            prev = p;
        }
    }

    #[test]
    fn aux_zero_equals_logit_space_mcf_plus_sigmoid() {
        use rand::{Rng, SeedableRng};
        let mut model = aux_model(0.0, 0.0);
        // random (but finite) per-bin functions, aux still zero
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut params = model.flatten_params();
        for p in &mut params {
            *p = rng.random_range(-0.5..0.5);
        }
        model.unflatten_params(&params).unwrap();
        for layer in model.aux.as_mut().unwrap().layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        for _ in 0..100 {
            let s: f64 = rng.random_range(0.01..0.99);
            let sample = Sample::with_features(s, false, 0, vec![rng.random(), rng.random()]);
            let p = model.calibrate_sample(&sample).unwrap();
            let expect = sigmoid(model.mcf_raw(crate::baselines::logit(s), 0).unwrap())
                .clamp(model.clamp, 1.0 - model.clamp);
            assert_eq!(p.to_bits(), expect.to_bits());
        }
    }
}
