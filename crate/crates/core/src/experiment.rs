//! Experiment orchestration: fit calibrators on a validation split,
//! evaluate every metric on a test split, write models and reports.
//!
//! Configuration is a flat `key = value` text document whose keys map
//! one-to-one onto the training and generator field names. Unknown keys
//! are rejected outright.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::baselines::{histogram_fit, isotonic_fit, platt_fit, sir_fit};
use crate::dataset::{load_dataset, Dataset};
use crate::error::{McnError, Result};
use crate::mcnet::{train, ContextMode, TrainConfig};
use crate::metrics::{compute_report, MetricsReport};
use crate::persist::{save_model, AnyCalibrator};
use crate::report::{render_comparison, render_report};
use crate::synth::{generate, Distortion, SyntheticSpec, TrueProbability};

/// Environment variable consulted for the seed when neither the command
/// line nor the config file supplies one.
pub const SEED_ENV_VAR: &str = "MCNET_SEED";
pub const DEFAULT_SEED: u64 = 42;

/// Calibrators the toolkit can fit by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibratorKind {
    Histogram,
    Isotonic,
    Platt,
    Sir,
    McnetNone,
    McnetField,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 6] = [
        CalibratorKind::Histogram,
        CalibratorKind::Isotonic,
        CalibratorKind::Platt,
        CalibratorKind::Sir,
        CalibratorKind::McnetNone,
        CalibratorKind::McnetField,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CalibratorKind::Histogram => "histogram",
            CalibratorKind::Isotonic => "isotonic",
            CalibratorKind::Platt => "platt",
            CalibratorKind::Sir => "sir",
            CalibratorKind::McnetNone => "mcnet-none",
            CalibratorKind::McnetField => "mcnet-field",
        }
    }
}

impl std::str::FromStr for CalibratorKind {
    type Err = McnError;

    fn from_str(s: &str) -> Result<Self> {
        CalibratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| McnError::InvalidConfig(format!("unknown calibrator {s:?}")))
    }
}

/// Fits one calibrator on the validation split.
pub fn fit_calibrator(
    kind: CalibratorKind,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<AnyCalibrator> {
    match kind {
        CalibratorKind::Histogram => Ok(AnyCalibrator::Histogram(histogram_fit(
            &validation.samples,
            config.bins,
        )?)),
        CalibratorKind::Isotonic => {
            Ok(AnyCalibrator::Isotonic(isotonic_fit(&validation.samples)?))
        }
        CalibratorKind::Platt => Ok(AnyCalibrator::Platt(platt_fit(
            &validation.samples,
            100,
            1e-10,
        )?)),
        CalibratorKind::Sir => Ok(AnyCalibrator::Sir(sir_fit(
            &validation.samples,
            config.bins,
        )?)),
        CalibratorKind::McnetNone | CalibratorKind::McnetField => {
            let mut cfg = config.clone();
            cfg.context_mode = if kind == CalibratorKind::McnetField {
                ContextMode::Field
            } else {
                ContextMode::None
            };
            let (model, _history) = train(validation, &cfg)?;
            Ok(AnyCalibrator::Mcnet(model))
        }
    }
}

/// Evaluates a fitted calibrator on a test split.
pub fn evaluate_calibrator(calibrator: &AnyCalibrator, test: &Dataset) -> Result<MetricsReport> {
    let preds = calibrator.calibrate_batch(&test.samples)?;
    compute_report(&preds, &test.labels(), &test.fields(), test.field_count)
}

/// A parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Dataset pair; when absent, `synthetic` supplies both splits.
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub calibrators: Vec<CalibratorKind>,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

/// Key-value text for any subset of the experiment, training, and
/// generator fields. `#` starts a comment; unknown keys are errors.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| McnError::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        if map.contains_key(&key) {
            return Err(McnError::Parse {
                line: i + 1,
                message: format!("duplicate key {key:?}"),
            });
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        McnError::InvalidConfig(format!("bad value {value:?} for key {key:?}"))
    })
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// Applies one `key = value` pair onto a training config. Returns false
/// when the key is not a training field.
pub fn apply_train_key(config: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "bins" => config.bins = parse(key, value)?,
        "quad_steps" => config.quad_steps = parse(key, value)?,
        "learning_rate" => config.learning_rate = parse(key, value)?,
        "batch_size" => config.batch_size = parse(key, value)?,
        "epochs" => config.epochs = parse(key, value)?,
        "order_weight" => config.order_weight = parse(key, value)?,
        "balance_weight" => config.balance_weight = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        "embed_dim" => config.embed_dim = parse(key, value)?,
        "f1_hidden" => config.f1_hidden = parse_usize_list(key, value)?,
        "f2_hidden" => config.f2_hidden = parse_usize_list(key, value)?,
        "aux_hidden" => config.aux_hidden = parse_usize_list(key, value)?,
        "context_mode" => {
            config.context_mode = match value {
                "none" => ContextMode::None,
                "field" => ContextMode::Field,
                other => {
                    return Err(McnError::InvalidConfig(format!(
                        "context_mode must be none or field, got {other:?}"
                    )))
                }
            }
        }
        "aux_enabled" => config.aux_enabled = parse(key, value)?,
        "clamp" => config.clamp = parse(key, value)?,
        "bin_lower" => {
            config.bin_lower = match value {
                "zero" => crate::mcnet::BinLower::Zero,
                "bin-left" => crate::mcnet::BinLower::BinLeft,
                other => {
                    return Err(McnError::InvalidConfig(format!(
                        "bin_lower must be zero or bin-left, got {other:?}"
                    )))
                }
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Applies one `key = value` pair onto a generator spec. Returns false
/// when the key is not a generator field.
pub fn apply_synth_key(spec: &mut SyntheticSpec, key: &str, value: &str) -> Result<bool> {
    match key {
        "n" => spec.n = parse(key, value)?,
        "fields" => spec.fields = parse(key, value)?,
        "distortions" => {
            spec.distortions = value
                .split(',')
                .map(|d| d.trim().parse::<Distortion>())
                .collect::<Result<_>>()?
        }
        "distribution" => spec.distribution = value.parse::<TrueProbability>()?,
        "seed" => spec.seed = parse(key, value)?,
        "feature_dim" => spec.feature_dim = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    /// Parses a config document. Every key must belong to the experiment,
    /// training, or generator namespace.
    pub fn from_text(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        let mut cfg = ExperimentConfig {
            validation: None,
            test: None,
            synthetic: None,
            calibrators: Vec::new(),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("."),
        };
        let mut synth = SyntheticSpec {
            n: 0,
            fields: 0,
            distortions: vec![Distortion::Identity],
            distribution: TrueProbability::Uniform,
            seed: DEFAULT_SEED,
            feature_dim: 0,
        };
        let mut synth_used = false;
        for (key, value) in &map {
            match key.as_str() {
                "validation" => cfg.validation = Some(PathBuf::from(value)),
                "test" => cfg.test = Some(PathBuf::from(value)),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "calibrators" => {
                    cfg.calibrators = value
                        .split(',')
                        .map(|c| c.trim().parse())
                        .collect::<Result<_>>()?
                }
                _ => {
                    let train_hit = apply_train_key(&mut cfg.train, key, value)?;
                    let synth_hit = apply_synth_key(&mut synth, key, value)?;
                    if synth_hit && key != "seed" {
                        synth_used = true;
                    }
                    if !train_hit && !synth_hit {
                        return Err(McnError::InvalidConfig(format!("unknown key {key:?}")));
                    }
                }
            }
        }
        synth.seed = cfg.train.seed;
        if synth_used {
            if synth.n == 0 {
                return Err(McnError::InvalidConfig(
                    "synthetic generation needs n > 0".into(),
                ));
            }
            if synth.fields == 0 {
                synth.fields = synth.distortions.len();
            }
            cfg.synthetic = Some(synth);
        }
        if cfg.calibrators.is_empty() {
            return Err(McnError::InvalidConfig(
                "config must list at least one calibrator".into(),
            ));
        }
        match (&cfg.validation, &cfg.test, &cfg.synthetic) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => Ok(cfg),
            _ => Err(McnError::InvalidConfig(
                "config needs either validation+test paths or a synthetic spec".into(),
            )),
        }
    }

    fn splits(&self) -> Result<(Dataset, Dataset)> {
        if let (Some(v), Some(t)) = (&self.validation, &self.test) {
            return Ok((load_dataset(v)?, load_dataset(t)?));
        }
        let spec = self.synthetic.as_ref().expect("validated in from_text");
        let (validation, _) = generate(spec)?;
        let mut test_spec = spec.clone();
        test_spec.seed = spec.seed.wrapping_add(1);
        let (test, _) = generate(&test_spec)?;
        Ok((validation, test))
    }
}

/// Runs the experiment: fit on validation, evaluate on test, write one
/// model file and one report per calibrator plus a comparison table.
/// Reruns with the same config produce byte-identical artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<(String, MetricsReport)>> {
    let (validation, test) = config.splits()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut rows = Vec::new();
    for &kind in &config.calibrators {
        let calibrator = fit_calibrator(kind, &validation, &config.train)?;
        let report = evaluate_calibrator(&calibrator, &test)?;
        save_model(
            &calibrator,
            &config.out_dir.join(format!("{}.model.json", kind.name())),
        )?;
        fs::write(
            config.out_dir.join(format!("{}.report.txt", kind.name())),
            render_report(kind.name(), &report),
        )?;
        rows.push((kind.name().to_string(), report));
    }
    fs::write(
        config.out_dir.join("comparison.txt"),
        render_comparison(&rows),
    )?;
    Ok(rows)
}

/// Seed precedence: explicit value, else the `MCNET_SEED` environment
/// variable, else the built-in default.
pub fn resolve_seed(explicit: Option<u64>) -> u64 {
    if let Some(s) = explicit {
        return s;
    }
    if let Ok(text) = std::env::var(SEED_ENV_VAR) {
        if let Ok(s) = text.trim().parse() {
            return s;
        }
    }
    DEFAULT_SEED
}

/// Loads a config file and folds command-line overrides on top.
pub fn merged_key_values(
    config_path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<BTreeMap<String, String>> {
    let mut map = match config_path {
        Some(p) => parse_key_values(&fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_synthetic_config() {
        let cfg = ExperimentConfig::from_text(
            "n = 1000\ndistortions = power:2\ncalibrators = histogram, sir\nbins = 5\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.calibrators.len(), 2);
        let synth = cfg.synthetic.unwrap();
        assert_eq!(synth.n, 1000);
        assert_eq!(synth.seed, 9);
        assert_eq!(cfg.train.bins, 5);
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = ExperimentConfig::from_text("n = 10\ncalibrators = sir\nbogus = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn rejects_mixed_or_missing_sources() {
        assert!(ExperimentConfig::from_text("calibrators = sir\n").is_err());
        assert!(
            ExperimentConfig::from_text("validation = a.csv\ncalibrators = sir\n").is_err()
        );
    }

    #[test]
    fn run_experiment_writes_artifacts_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "n = 2000\ndistortions = power:2\n\
             calibrators = histogram, isotonic, platt, sir, mcnet-none\n\
             bins = 4\nquad_steps = 12\nepochs = 2\nlearning_rate = 0.01\n\
             batch_size = 512\nembed_dim = 4\nf1_hidden = 8\nf2_hidden = 8\n\
             seed = 3\nout_dir = {}\n",
            dir.path().display()
        );
        let cfg = ExperimentConfig::from_text(&text).unwrap();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 5);
        let table = fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
        assert_eq!(table.lines().count(), 6);
        for kind in ["histogram", "isotonic", "platt", "sir", "mcnet-none"] {
            assert!(dir.path().join(format!("{kind}.model.json")).exists());
            assert!(dir.path().join(format!("{kind}.report.txt")).exists());
        }
        // rerun: byte-identical artifacts
        let before = fs::read(dir.path().join("comparison.txt")).unwrap();
        run_experiment(&cfg).unwrap();
        let after = fs::read(dir.path().join("comparison.txt")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn field_mode_report_has_per_field_sections() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "n = 3000\nfields = 3\ndistortions = power:2, logit-shift:0.5, identity\n\
             calibrators = mcnet-field\n\
             bins = 3\nquad_steps = 8\nepochs = 1\nlearning_rate = 0.01\n\
             batch_size = 512\nembed_dim = 4\nf1_hidden = 8\nf2_hidden = 8\n\
             context_mode = field\nseed = 5\nout_dir = {}\n",
            dir.path().display()
        );
        let cfg = ExperimentConfig::from_text(&text).unwrap();
        run_experiment(&cfg).unwrap();
        let report = fs::read_to_string(dir.path().join("mcnet-field.report.txt")).unwrap();
        for key in ["field.0.pcoc", "field.1.pcoc", "field.2.pcoc"] {
            assert!(report.contains(key), "missing {key} in:\n{report}");
        }
    }

    #[test]
    fn seed_resolution_order() {
        assert_eq!(resolve_seed(Some(7)), 7);
        // without explicit seed or env var, the default applies
        std::env::remove_var(SEED_ENV_VAR);
        assert_eq!(resolve_seed(None), DEFAULT_SEED);
    }
}
