//! Versioned model persistence.
//!
//! Models are stored as a self-describing JSON document: a format tag,
//! a version number, and the calibrator with every parameter array in
//! row-major order alongside its declared shape. Floats serialize in
//! shortest round-trip form, so save followed by load reproduces outputs
//! bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    Calibrator, PiecewiseConstantCalibrator, PiecewiseLinearCalibrator, PlattCalibrator,
};
use crate::dataset::Sample;
use crate::error::{McnError, Result};
use crate::mcnet::McnetModel;

pub const MODEL_FORMAT: &str = "mcnet-model";
pub const MODEL_VERSION: u32 = 1;

/// Any calibrator the toolkit can fit, tagged for persistence and CLI
/// dispatch.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AnyCalibrator {
    Histogram(PiecewiseConstantCalibrator),
    Isotonic(PiecewiseConstantCalibrator),
    Platt(PlattCalibrator),
    Sir(PiecewiseLinearCalibrator),
    Mcnet(McnetModel),
}

impl AnyCalibrator {
    pub fn type_name(&self) -> &'static str {
        match self {
            AnyCalibrator::Histogram(_) => "histogram",
            AnyCalibrator::Isotonic(_) => "isotonic",
            AnyCalibrator::Platt(_) => "platt",
            AnyCalibrator::Sir(_) => "sir",
            AnyCalibrator::Mcnet(_) => "mcnet",
        }
    }

    /// Calibrates one sample (the monotonic network may need field id and
    /// features; classical calibrators use the score alone).
    pub fn calibrate_sample(&self, sample: &Sample) -> Result<f64> {
        match self {
            AnyCalibrator::Histogram(c) | AnyCalibrator::Isotonic(c) => Ok(c.apply(sample.score)),
            AnyCalibrator::Platt(c) => Ok(c.apply(sample.score)),
            AnyCalibrator::Sir(c) => Ok(c.apply(sample.score)),
            AnyCalibrator::Mcnet(m) => m.calibrate_sample(sample),
        }
    }

    pub fn calibrate_batch(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        samples.iter().map(|s| self.calibrate_sample(s)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    calibrator: AnyCalibrator,
}

pub fn save_model(calibrator: &AnyCalibrator, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        calibrator: calibrator.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| McnError::ModelFormat(format!("serialize: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyCalibrator> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| McnError::ModelFormat(format!("parse: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(McnError::ModelFormat(format!(
            "not a model file (format {:?})",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(McnError::ModelFormat(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    let mut calibrator = file.calibrator;
    if let AnyCalibrator::Mcnet(m) = &mut calibrator {
        m.restore_transients();
    }
    Ok(calibrator)
}
