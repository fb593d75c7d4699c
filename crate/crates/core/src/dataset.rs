//! Prediction-event samples and the line-oriented dataset file format.
//!
//! Files are comma-separated ASCII with a `# fields=N` directive, a header
//! `score,label,field[,f0,f1,...]`, and one sample per line. Floats are
//! written in shortest round-trip form, so save/load preserves every value
//! exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{McnError, Result};

/// One prediction event: an uncalibrated score in (0,1), the binary
/// outcome, a categorical field id, and optional features for the
/// auxiliary-network mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub score: f64,
    pub label: bool,
    pub field: usize,
    pub features: Vec<f64>,
}

impl Sample {
    pub fn new(score: f64, label: bool, field: usize) -> Self {
        Sample {
            score,
            label,
            field,
            features: Vec::new(),
        }
    }

    pub fn with_features(score: f64, label: bool, field: usize, features: Vec<f64>) -> Self {
        Sample {
            score,
            label,
            field,
            features,
        }
    }

    #[inline]
    pub fn label_f64(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// A set of samples with a declared field count and a uniform feature
/// dimension (0 when no features are present).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub field_count: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, field_count: usize) -> Result<Self> {
        let feature_dim = samples.first().map_or(0, |s| s.features.len());
        let ds = Dataset {
            samples,
            field_count,
            feature_dim,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label_f64()).collect()
    }

    pub fn fields(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.field).collect()
    }

    fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.score > 0.0 && s.score < 1.0) {
                return Err(McnError::InvalidInput(format!(
                    "sample {i}: score {} not strictly inside (0,1)",
                    s.score
                )));
            }
            if s.field >= self.field_count {
                return Err(McnError::UnknownField {
                    field: s.field,
                    count: self.field_count,
                });
            }
            if s.features.len() != self.feature_dim {
                return Err(McnError::DimensionMismatch(format!(
                    "sample {i}: {} features, expected {}",
                    s.features.len(),
                    self.feature_dim
                )));
            }
        }
        Ok(())
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# fields={}", dataset.field_count).unwrap();
    out.push_str("score,label,field");
    for i in 0..dataset.feature_dim {
        write!(out, ",f{i}").unwrap();
    }
    out.push('\n');
    for s in &dataset.samples {
        write!(out, "{},{},{}", s.score, u8::from(s.label), s.field).unwrap();
        for f in &s.features {
            write!(out, ",{f}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().peekable();

    // optional "# fields=N" directive; without it the count is inferred
    let mut declared_fields: Option<usize> = None;
    while let Some(&(line_no, line)) = lines.peek() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            lines.next();
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("fields=") {
                declared_fields = Some(v.trim().parse().map_err(|_| McnError::Parse {
                    line: line_no + 1,
                    message: format!("bad field count {v:?}"),
                })?);
            }
            lines.next();
            continue;
        }
        break;
    }

    let (header_no, header) = lines.next().ok_or_else(|| McnError::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "score" || cols[1] != "label" || cols[2] != "field" {
        return Err(McnError::Parse {
            line: header_no + 1,
            message: format!("expected header score,label,field[,f0,...], got {header:?}"),
        });
    }
    let feature_dim = cols.len() - 3;
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(McnError::Parse {
                line: header_no + 1,
                message: format!("feature column {i} must be named f{i}, got {c:?}"),
            });
        }
    }

    let mut samples = Vec::new();
    let mut max_field = 0usize;
    for (line_no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 3 + feature_dim {
            return Err(McnError::Parse {
                line: line_no + 1,
                message: format!("expected {} columns, got {}", 3 + feature_dim, parts.len()),
            });
        }
        let score: f64 = parts[0].parse().map_err(|_| McnError::Parse {
            line: line_no + 1,
            message: format!("bad score {:?}", parts[0]),
        })?;
        if !(score > 0.0 && score < 1.0) {
            return Err(McnError::Parse {
                line: line_no + 1,
                message: format!("score {score} not strictly inside (0,1)"),
            });
        }
        let label = match parts[1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(McnError::Parse {
                    line: line_no + 1,
                    message: format!("label {other:?} not in {{0,1}}"),
                })
            }
        };
        let field: usize = parts[2].parse().map_err(|_| McnError::Parse {
            line: line_no + 1,
            message: format!("bad field id {:?}", parts[2]),
        })?;
        if let Some(count) = declared_fields {
            if field >= count {
                return Err(McnError::Parse {
                    line: line_no + 1,
                    message: format!("field id {field} >= declared field count {count}"),
                });
            }
        }
        max_field = max_field.max(field);
        let mut features = Vec::with_capacity(feature_dim);
        for p in &parts[3..] {
            let v: f64 = p.parse().map_err(|_| McnError::Parse {
                line: line_no + 1,
                message: format!("bad feature value {p:?}"),
            })?;
            features.push(v);
        }
        samples.push(Sample {
            score,
            label,
            field,
            features,
        });
    }
    if samples.is_empty() {
        return Err(McnError::InvalidInput("dataset has no samples".into()));
    }
    let field_count = declared_fields.unwrap_or(max_field + 1);
    Dataset::new(samples, field_count)
}
