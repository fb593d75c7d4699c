//! Command-line interface: generate synthetic data, train calibrators,
//! apply and evaluate saved models, and compare methods side by side.
//!
//! Every flag can also come from a `key = value` config file via
//! `--config`; explicit flags override the file. The seed falls back to
//! the `MCNET_SEED` environment variable when not given anywhere.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcnet::dataset::{load_dataset, save_dataset};
use mcnet::error::{McnError, Result};
use mcnet::experiment::{
    apply_synth_key, apply_train_key, evaluate_calibrator, fit_calibrator, merged_key_values,
    resolve_seed, run_experiment, CalibratorKind, ExperimentConfig,
};
use mcnet::mcnet::TrainConfig;
use mcnet::persist::{load_model, save_model};
use mcnet::report::{render_comparison, render_report};
use mcnet::synth::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "mcnet",
    version,
    about = "Post-hoc probability calibration: monotonic calibration networks and classical baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic miscalibrated dataset with known ground truth
    Generate(GenerateArgs),
    /// Fit a calibrator on a validation dataset and save the model
    Train(TrainArgs),
    /// Apply a saved model to a dataset, writing calibrated probabilities
    Calibrate(CalibrateArgs),
    /// Evaluate a saved model's calibration metrics on a test dataset
    Evaluate(EvaluateArgs),
    /// Fit several calibrators on one validation set and compare on a test set
    Compare(CompareArgs),
}

/// Flags that mirror generator spec fields one-to-one.
#[derive(Args, Default)]
struct SynthFlags {
    /// Sample count
    #[arg(long)]
    n: Option<usize>,
    /// Field count |C|
    #[arg(long)]
    fields: Option<usize>,
    /// Comma list: identity | power:G | smoothstep | logit-shift:D | logit-scale:A
    #[arg(long)]
    distortions: Option<String>,
    /// uniform | beta:A,B
    #[arg(long)]
    distribution: Option<String>,
    /// Feature vector length per sample (0 = none)
    #[arg(long)]
    feature_dim: Option<usize>,
}

impl SynthFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        push_opt(&mut out, "n", &self.n);
        push_opt(&mut out, "fields", &self.fields);
        push_opt(&mut out, "distortions", &self.distortions);
        push_opt(&mut out, "distribution", &self.distribution);
        push_opt(&mut out, "feature_dim", &self.feature_dim);
        out
    }
}

/// Flags that mirror training config fields one-to-one.
#[derive(Args, Default)]
struct TrainFlags {
    /// Number of equal-frequency bins (K)
    #[arg(long)]
    bins: Option<usize>,
    /// Quadrature steps per integral (T)
    #[arg(long)]
    quad_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Order-preserving penalty weight (beta)
    #[arg(long)]
    order_weight: Option<f64>,
    /// Field-balance penalty weight (alpha)
    #[arg(long)]
    balance_weight: Option<f64>,
    /// Context embedding dimension (d)
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Comma list of hidden layer widths for the derivative net
    #[arg(long)]
    f1_hidden: Option<String>,
    /// Comma list of hidden layer widths for the bias net
    #[arg(long)]
    f2_hidden: Option<String>,
    /// Comma list of hidden layer widths for the auxiliary net
    #[arg(long)]
    aux_hidden: Option<String>,
    /// Enable the auxiliary feature network (logit-space calibration)
    #[arg(long)]
    aux_enabled: Option<bool>,
    /// Output clamp epsilon
    #[arg(long)]
    clamp: Option<f64>,
    /// Lower integration bound per bin: zero | bin-left
    #[arg(long)]
    bin_lower: Option<String>,
}

impl TrainFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        push_opt(&mut out, "bins", &self.bins);
        push_opt(&mut out, "quad_steps", &self.quad_steps);
        push_opt(&mut out, "learning_rate", &self.learning_rate);
        push_opt(&mut out, "batch_size", &self.batch_size);
        push_opt(&mut out, "epochs", &self.epochs);
        push_opt(&mut out, "order_weight", &self.order_weight);
        push_opt(&mut out, "balance_weight", &self.balance_weight);
        push_opt(&mut out, "embed_dim", &self.embed_dim);
        push_opt(&mut out, "f1_hidden", &self.f1_hidden);
        push_opt(&mut out, "f2_hidden", &self.f2_hidden);
        push_opt(&mut out, "aux_hidden", &self.aux_hidden);
        push_opt(&mut out, "aux_enabled", &self.aux_enabled);
        push_opt(&mut out, "clamp", &self.clamp);
        push_opt(&mut out, "bin_lower", &self.bin_lower);
        out
    }
}

fn push_opt<T: std::fmt::Display>(out: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset path (CSV)
    #[arg(long)]
    out: PathBuf,
    /// Config file with key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Validation dataset the calibrator is fit on
    #[arg(long)]
    data: PathBuf,
    /// Output model path (JSON)
    #[arg(long)]
    out: PathBuf,
    /// histogram | isotonic | platt | sir | mcnet-none | mcnet-field
    #[arg(long, default_value = "mcnet-none")]
    calibrator: String,
    /// Config file with key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Saved model path
    #[arg(long)]
    model: PathBuf,
    /// Dataset to calibrate
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (score,label,field,calibrated)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved model path
    #[arg(long)]
    model: PathBuf,
    /// Test dataset
    #[arg(long)]
    data: PathBuf,
    /// Report output path (prints to stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Config file with key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Validation dataset path
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Test dataset path
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma list of calibrators to fit
    #[arg(long)]
    calibrators: Option<String>,
    /// Directory for models, reports, and the comparison table
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    train: TrainFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| McnError::InvalidConfig(format!("bad seed {s:?}")))
}

fn build_synth_spec(map: &BTreeMap<String, String>, seed: u64) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec {
        n: 10_000,
        fields: 0,
        distortions: vec![mcnet::synth::Distortion::Identity],
        distribution: mcnet::synth::TrueProbability::Uniform,
        seed,
        feature_dim: 0,
    };
    for (key, value) in map {
        if key == "seed" {
            continue;
        }
        if !apply_synth_key(&mut spec, key, value)? {
            return Err(McnError::InvalidConfig(format!(
                "unknown generator key {key:?}"
            )));
        }
    }
    if spec.fields == 0 {
        spec.fields = spec.distortions.len();
    }
    Ok(spec)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut overrides = args.synth.overrides();
    push_opt(&mut overrides, "seed", &args.seed);
    let map = merged_key_values(args.config.as_deref(), &overrides)?;
    let seed = resolve_seed(map.get("seed").map(|s| parse_u64(s)).transpose()?);
    let spec = build_synth_spec(&map, seed)?;
    let (dataset, _) = generate(&spec)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} samples ({} fields, feature dim {}) to {}",
        dataset.len(),
        dataset.field_count,
        dataset.feature_dim,
        args.out.display()
    );
    Ok(())
}

/// Builds the training config from a merged key-value map. The learning
/// rate default switches to the field-mode value when the calibrator is
/// field-aware and no explicit rate was given.
fn build_train_config(
    map: &BTreeMap<String, String>,
    kind: CalibratorKind,
    seed: u64,
) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    for (key, value) in map {
        if key == "seed" {
            continue;
        }
        if !apply_train_key(&mut config, key, value)? {
            return Err(McnError::InvalidConfig(format!(
                "unknown training key {key:?}"
            )));
        }
    }
    config.seed = seed;
    if kind == CalibratorKind::McnetField && !map.contains_key("learning_rate") {
        config.learning_rate = TrainConfig::FIELD_LEARNING_RATE;
    }
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let kind: CalibratorKind = args.calibrator.parse()?;
    let mut overrides = args.train.overrides();
    push_opt(&mut overrides, "seed", &args.seed);
    let map = merged_key_values(args.config.as_deref(), &overrides)?;
    let seed = resolve_seed(map.get("seed").map(|s| parse_u64(s)).transpose()?);
    let config = build_train_config(&map, kind, seed)?;
    let data = load_dataset(&args.data)?;
    let calibrator = fit_calibrator(kind, &data, &config)?;
    save_model(&calibrator, &args.out)?;
    println!(
        "fitted {} on {} samples -> {}",
        kind.name(),
        data.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let calibrator = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let preds = calibrator.calibrate_batch(&data.samples)?;
    let mut out = String::from("score,label,field,calibrated\n");
    for (s, p) in data.samples.iter().zip(&preds) {
        writeln!(out, "{},{},{},{}", s.score, u8::from(s.label), s.field, p).unwrap();
    }
    fs::write(&args.out, out)?;
    println!(
        "calibrated {} samples -> {}",
        preds.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let calibrator = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let report = evaluate_calibrator(&calibrator, &data)?;
    let text = render_report(calibrator.type_name(), &report);
    match &args.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut overrides = args.synth.overrides();
    overrides.extend(args.train.overrides());
    push_opt(&mut overrides, "seed", &args.seed);
    push_opt(
        &mut overrides,
        "validation",
        &args.validation.as_ref().map(|p| p.display().to_string()),
    );
    push_opt(
        &mut overrides,
        "test",
        &args.test.as_ref().map(|p| p.display().to_string()),
    );
    push_opt(&mut overrides, "calibrators", &args.calibrators);
    push_opt(
        &mut overrides,
        "out_dir",
        &args.out_dir.as_ref().map(|p| p.display().to_string()),
    );
    let map = merged_key_values(args.config.as_deref(), &overrides)?;
    let seed = resolve_seed(map.get("seed").map(|s| parse_u64(s)).transpose()?);
    let mut text = String::new();
    for (k, v) in &map {
        if k != "seed" {
            writeln!(text, "{k} = {v}").unwrap();
        }
    }
    writeln!(text, "seed = {seed}").unwrap();
    let config = ExperimentConfig::from_text(&text)?;
    let rows = run_experiment(&config)?;
    print!("{}", render_comparison(&rows));
    Ok(())
}
