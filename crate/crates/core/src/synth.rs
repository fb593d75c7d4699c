//! Synthetic miscalibrated data with known ground-truth calibration curves.
//!
//! Each sample draws a true probability `q`, a Bernoulli(`q`) label, and an
//! uncalibrated score `s = d_c(q)` through the field's strictly increasing
//! distortion. The ground-truth calibration curve for field `c` is the
//! inverse distortion `d_c^{-1}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::baselines::logit;
use crate::dataset::{Dataset, Sample};
use crate::error::{McnError, Result};
use crate::nn::sigmoid;

/// Strictly increasing maps of (0,1) onto (0,1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distortion {
    /// `d(q) = q` (already calibrated).
    Identity,
    /// `d(q) = q^gamma`, gamma > 0.
    Power { gamma: f64 },
    /// `d(q) = q^2 (3 - 2q)`; the inverse is found by bisection.
    Smoothstep,
    /// `d(q) = sigmoid(logit(q) + delta)`.
    LogitShift { delta: f64 },
    /// `d(q) = sigmoid(scale * logit(q))`, scale > 0.
    LogitScale { scale: f64 },
}

impl Distortion {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distortion::Power { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                McnError::InvalidConfig(format!("power distortion needs gamma > 0, got {gamma}")),
            ),
            Distortion::LogitShift { delta } if !delta.is_finite() => Err(
                McnError::InvalidConfig("logit-shift distortion needs a finite delta".into()),
            ),
            Distortion::LogitScale { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(McnError::InvalidConfig(format!(
                    "logit-scale distortion needs scale > 0, got {scale}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The distortion itself: true probability -> uncalibrated score.
    pub fn apply(&self, q: f64) -> f64 {
        let s = match *self {
            Distortion::Identity => q,
            Distortion::Power { gamma } => q.powf(gamma),
            Distortion::Smoothstep => q * q * (3.0 - 2.0 * q),
            Distortion::LogitShift { delta } => sigmoid(logit(q) + delta),
            Distortion::LogitScale { scale } => sigmoid(scale * logit(q)),
        };
        s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// The ground-truth calibration curve: uncalibrated score -> true
    /// probability (the inverse map).
    pub fn inverse(&self, s: f64) -> f64 {
        let q = match *self {
            Distortion::Identity => s,
            Distortion::Power { gamma } => s.powf(1.0 / gamma),
            Distortion::Smoothstep => invert_monotone(|q| q * q * (3.0 - 2.0 * q), s),
            Distortion::LogitShift { delta } => sigmoid(logit(s) - delta),
            Distortion::LogitScale { scale } => sigmoid(logit(s) / scale),
        };
        q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }
}

impl std::str::FromStr for Distortion {
    type Err = McnError;

    /// Accepts `identity`, `smoothstep`, `power:G`, `logit-shift:D`,
    /// `logit-scale:A`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let parse_arg = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| McnError::InvalidConfig(format!("{name} needs :{what}")))?
                .parse::<f64>()
                .map_err(|_| McnError::InvalidConfig(format!("bad {what} in distortion {s:?}")))
        };
        let d = match name {
            "identity" => Distortion::Identity,
            "smoothstep" => Distortion::Smoothstep,
            "power" => Distortion::Power { gamma: parse_arg("gamma")? },
            "logit-shift" => Distortion::LogitShift { delta: parse_arg("delta")? },
            "logit-scale" => Distortion::LogitScale { scale: parse_arg("scale")? },
            other => {
                return Err(McnError::InvalidConfig(format!(
                    "unknown distortion {other:?}"
                )))
            }
        };
        d.validate()?;
        Ok(d)
    }
}

impl std::fmt::Display for Distortion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Distortion::Identity => write!(f, "identity"),
            Distortion::Power { gamma } => write!(f, "power:{gamma}"),
            Distortion::Smoothstep => write!(f, "smoothstep"),
            Distortion::LogitShift { delta } => write!(f, "logit-shift:{delta}"),
            Distortion::LogitScale { scale } => write!(f, "logit-scale:{scale}"),
        }
    }
}

fn invert_monotone<F: Fn(f64) -> f64>(f: F, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Distribution of true probabilities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrueProbability {
    Uniform,
    Beta { alpha: f64, beta: f64 },
}

impl std::str::FromStr for TrueProbability {
    type Err = McnError;

    /// Accepts `uniform` or `beta:A,B`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(TrueProbability::Uniform),
            other => {
                if let Some(args) = other.strip_prefix("beta:") {
                    let (a, b) = args.split_once(',').ok_or_else(|| {
                        McnError::InvalidConfig("beta distribution needs beta:A,B".into())
                    })?;
                    let alpha: f64 = a.trim().parse().map_err(|_| {
                        McnError::InvalidConfig(format!("bad beta alpha {a:?}"))
                    })?;
                    let beta: f64 = b.trim().parse().map_err(|_| {
                        McnError::InvalidConfig(format!("bad beta beta {b:?}"))
                    })?;
                    if alpha <= 0.0 || beta <= 0.0 {
                        return Err(McnError::InvalidConfig(
                            "beta parameters must be positive".into(),
                        ));
                    }
                    Ok(TrueProbability::Beta { alpha, beta })
                } else {
                    Err(McnError::InvalidConfig(format!(
                        "unknown distribution {other:?}"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for TrueProbability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TrueProbability::Uniform => write!(f, "uniform"),
            TrueProbability::Beta { alpha, beta } => write!(f, "beta:{alpha},{beta}"),
        }
    }
}

/// Fully determines a synthetic dataset given its seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Field count |C|.
    pub fields: usize,
    /// One distortion per field, or a single distortion shared by all.
    pub distortions: Vec<Distortion>,
    pub distribution: TrueProbability,
    pub seed: u64,
    /// Per-sample feature vector length (0 disables features).
    pub feature_dim: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(McnError::InvalidConfig("sample count must be >= 1".into()));
        }
        if self.fields == 0 {
            return Err(McnError::InvalidConfig("field count must be >= 1".into()));
        }
        if self.distortions.len() != self.fields && self.distortions.len() != 1 {
            return Err(McnError::InvalidConfig(format!(
                "{} distortions for {} fields (give one per field, or one shared)",
                self.distortions.len(),
                self.fields
            )));
        }
        for d in &self.distortions {
            d.validate()?;
        }
        Ok(())
    }

    fn distortion_for(&self, field: usize) -> Distortion {
        if self.distortions.len() == 1 {
            self.distortions[0]
        } else {
            self.distortions[field]
        }
    }
}

/// Evaluable ground-truth calibration curves, one per field.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    distortions: Vec<Distortion>,
}

impl GroundTruth {
    /// True probability for an uncalibrated score from the given field.
    pub fn curve(&self, field: usize, score: f64) -> Result<f64> {
        self.distortions
            .get(field)
            .map(|d| d.inverse(score))
            .ok_or(McnError::UnknownField {
                field,
                count: self.distortions.len(),
            })
    }

    pub fn field_count(&self) -> usize {
        self.distortions.len()
    }
}

/// Draws the dataset described by `spec` and hands back the ground-truth
/// curves. Same spec, same output, bit for bit.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta_sampler = match spec.distribution {
        TrueProbability::Uniform => None,
        TrueProbability::Beta { alpha, beta } => Some(Beta::new(alpha, beta).map_err(|e| {
            McnError::InvalidConfig(format!("beta distribution parameters: {e}"))
        })?),
    };
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let field = rng.random_range(0..spec.fields);
        let q = loop {
            let q = match &beta_sampler {
                None => rng.random::<f64>(),
                Some(b) => b.sample(&mut rng),
            };
            if q > 0.0 && q < 1.0 {
                break q;
            }
        };
        let label = rng.random::<f64>() < q;
        let score = spec.distortion_for(field).apply(q);
        let features = (0..spec.feature_dim)
            .map(|_| 0.5 * (q - 0.5) + 0.5 * rng.random_range(-1.0..1.0))
            .collect();
        samples.push(Sample {
            score,
            label,
            field,
            features,
        });
    }
    let dataset = Dataset::new(samples, spec.fields)?;
    Ok((
        dataset,
        GroundTruth {
            distortions: (0..spec.fields).map(|f| spec.distortion_for(f)).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pcoc;

    fn spec(n: usize, distortions: Vec<Distortion>, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n,
            fields: distortions.len(),
            distortions,
            distribution: TrueProbability::Uniform,
            seed,
            feature_dim: 0,
        }
    }

    #[test]
    fn identity_distortion_is_nearly_calibrated() {
        let (data, _) = generate(&spec(1_000_000, vec![Distortion::Identity], 1)).unwrap();
        let v = pcoc(&data.scores(), &data.labels()).unwrap();
        assert!((0.99..=1.01).contains(&v), "pcoc {v}");
    }

    #[test]
    fn power_two_understates_and_sqrt_recovers() {
        let d = Distortion::Power { gamma: 2.0 };
        let (data, truth) = generate(&spec(200_000, vec![d], 2)).unwrap();
        let v = pcoc(&data.scores(), &data.labels()).unwrap();
        assert!(v < 1.0, "expected uncalibrated pcoc < 1, got {v}");
        // applying the ground-truth curve restores calibration
        let corrected: Vec<f64> = data
            .samples
            .iter()
            .map(|s| truth.curve(s.field, s.score).unwrap())
            .collect();
        let v = pcoc(&corrected, &data.labels()).unwrap();
        assert!((0.99..=1.01).contains(&v), "pcoc {v}");
        // the curve is sqrt
        assert!((truth.curve(0, 0.25).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_dataset() {
        let s = spec(5000, vec![Distortion::Smoothstep, Distortion::Identity], 3);
        let (a, _) = generate(&s).unwrap();
        let (b, _) = generate(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ground_truth_curve_recalibrates_every_distortion() {
        let all = vec![
            Distortion::Identity,
            Distortion::Power { gamma: 2.0 },
            Distortion::Power { gamma: 0.5 },
            Distortion::Smoothstep,
            Distortion::LogitShift { delta: 0.7 },
            Distortion::LogitScale { scale: 2.0 },
        ];
        let (data, truth) = generate(&spec(1_000_000, all, 4)).unwrap();
        let corrected: Vec<f64> = data
            .samples
            .iter()
            .map(|s| truth.curve(s.field, s.score).unwrap())
            .collect();
        let v = pcoc(&corrected, &data.labels()).unwrap();
        assert!((0.99..=1.01).contains(&v), "pcoc {v}");
    }

    #[test]
    fn distortions_strictly_increasing_on_grid() {
        let all = [
            Distortion::Identity,
            Distortion::Power { gamma: 3.0 },
            Distortion::Power { gamma: 0.25 },
            Distortion::Smoothstep,
            Distortion::LogitShift { delta: -1.2 },
            Distortion::LogitScale { scale: 0.5 },
        ];
        for d in all {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..1000 {
                let q = i as f64 / 1000.0;
                let s = d.apply(q);
                assert!(s > prev, "{d}: d({q}) = {s} <= {prev}");
                assert!(s > 0.0 && s < 1.0);
                prev = s;
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let all = [
            Distortion::Power { gamma: 2.0 },
            Distortion::Smoothstep,
            Distortion::LogitShift { delta: 0.5 },
            Distortion::LogitScale { scale: 3.0 },
        ];
        for d in all {
            for i in 1..100 {
                let q = i as f64 / 100.0;
                let back = d.inverse(d.apply(q));
                assert!((back - q).abs() < 1e-9, "{d}: {q} -> {back}");
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Distortion::Power { gamma: 0.0 }.validate().is_err());
        assert!(Distortion::Power { gamma: -1.0 }.validate().is_err());
        assert!(Distortion::LogitScale { scale: 0.0 }.validate().is_err());
        assert!("power:-2".parse::<Distortion>().is_err());
        assert!("mystery".parse::<Distortion>().is_err());
    }

    #[test]
    fn distortion_strings_round_trip() {
        for text in ["identity", "power:2", "smoothstep", "logit-shift:0.5", "logit-scale:2"] {
            let d: Distortion = text.parse().unwrap();
            assert_eq!(d.to_string(), text);
        }
    }

    #[test]
    fn features_correlate_with_labels() {
        let mut s = spec(50_000, vec![Distortion::Identity], 9);
        s.feature_dim = 3;
        let (data, _) = generate(&s).unwrap();
        assert_eq!(data.feature_dim, 3);
        // first feature should carry signal about the label
        let mean_pos: f64 = data
            .samples
            .iter()
            .filter(|x| x.label)
            .map(|x| x.features[0])
            .sum::<f64>()
            / data.samples.iter().filter(|x| x.label).count() as f64;
        let mean_neg: f64 = data
            .samples
            .iter()
            .filter(|x| !x.label)
            .map(|x| x.features[0])
            .sum::<f64>()
            / data.samples.iter().filter(|x| !x.label).count() as f64;
        assert!(mean_pos > mean_neg + 0.05, "{mean_pos} vs {mean_neg}");
    }
}
