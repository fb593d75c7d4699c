//! Classical calibrators: histogram binning, isotonic regression via
//! pool-adjacent-violators, Platt scaling, and smoothed isotonic
//! regression (isotonic bin posteriors joined by linear interpolation).

use crate::binning::{fit_bins, BinPartition};
use crate::dataset::Sample;
use crate::error::{McnError, Result};
use crate::nn::sigmoid;

/// A fitted calibrator maps an uncalibrated score to a calibrated
/// probability. Out-of-domain scores are clamped to the nearest boundary.
pub trait Calibrator {
    fn apply(&self, score: f64) -> f64;

    fn apply_batch(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

/// Piecewise-constant calibration: one posterior probability per bin.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PiecewiseConstantCalibrator {
    pub partition: BinPartition,
    pub posteriors: Vec<f64>,
}

impl PiecewiseConstantCalibrator {
    pub fn new(partition: BinPartition, posteriors: Vec<f64>) -> Result<Self> {
        if posteriors.len() != partition.bin_count() {
            return Err(McnError::DimensionMismatch(format!(
                "{} posteriors for {} bins",
                posteriors.len(),
                partition.bin_count()
            )));
        }
        if posteriors.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(McnError::InvalidInput(
                "bin posteriors must lie in [0, 1]".into(),
            ));
        }
        Ok(PiecewiseConstantCalibrator {
            partition,
            posteriors,
        })
    }
}

impl Calibrator for PiecewiseConstantCalibrator {
    fn apply(&self, score: f64) -> f64 {
        let k = match self.partition.bin_index(score) {
            Ok(k) => k,
            Err(_) if score < self.partition.lower() => 0,
            Err(_) => self.partition.bin_count() - 1,
        };
        self.posteriors[k]
    }
}

/// Continuous piecewise-linear calibration through knots `(b_k, a_k)` with
/// strictly increasing `b_k` and non-decreasing `a_k`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PiecewiseLinearCalibrator {
    pub knots_x: Vec<f64>,
    pub knots_y: Vec<f64>,
}

impl PiecewiseLinearCalibrator {
    pub fn new(knots_x: Vec<f64>, knots_y: Vec<f64>) -> Result<Self> {
        if knots_x.len() != knots_y.len() || knots_x.len() < 2 {
            return Err(McnError::InvalidConfig(
                "need matching x/y knot lists with at least two knots".into(),
            ));
        }
        if knots_x.windows(2).any(|p| p[0] >= p[1]) {
            return Err(McnError::InvalidConfig(
                "knot positions must be strictly increasing".into(),
            ));
        }
        if knots_y.windows(2).any(|p| p[0] > p[1]) {
            return Err(McnError::InvalidConfig(
                "knot values must be non-decreasing".into(),
            ));
        }
        Ok(PiecewiseLinearCalibrator { knots_x, knots_y })
    }
}

impl Calibrator for PiecewiseLinearCalibrator {
    fn apply(&self, score: f64) -> f64 {
        let n = self.knots_x.len();
        if score <= self.knots_x[0] {
            return self.knots_y[0];
        }
        if score >= self.knots_x[n - 1] {
            return self.knots_y[n - 1];
        }
        // first knot strictly greater than score
        let hi = self.knots_x.partition_point(|&b| b <= score);
        let lo = hi - 1;
        let t = (score - self.knots_x[lo]) / (self.knots_x[hi] - self.knots_x[lo]);
        self.knots_y[lo] + t * (self.knots_y[hi] - self.knots_y[lo])
    }
}

/// Platt scaling: `sigmoid(a * logit(score) + b)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlattCalibrator {
    pub slope: f64,
    pub intercept: f64,
    /// False when the fit stopped at `max_iter` before reaching tolerance.
    pub converged: bool,
}

impl Calibrator for PlattCalibrator {
    fn apply(&self, score: f64) -> f64 {
        let s = score.clamp(1e-12, 1.0 - 1e-12);
        sigmoid(self.slope * logit(s) + self.intercept)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Pool-adjacent-violators: the unique non-decreasing fit minimizing
/// weighted squared error to the ordered group `values`.
pub fn pav(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(McnError::InvalidInput("pav on empty input".into()));
    }
    if values.len() != weights.len() {
        return Err(McnError::DimensionMismatch(
            "pav values/weights length mismatch".into(),
        ));
    }
    // blocks of (weighted mean, weight, group count)
    let mut means: Vec<f64> = Vec::with_capacity(values.len());
    let mut wsums: Vec<f64> = Vec::with_capacity(values.len());
    let mut counts: Vec<usize> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        means.push(v);
        wsums.push(w);
        counts.push(1);
        while means.len() >= 2 && means[means.len() - 2] > means[means.len() - 1] {
            let (m2, w2, c2) = (means.pop().unwrap(), wsums.pop().unwrap(), counts.pop().unwrap());
            let last = means.len() - 1;
            let merged_w = wsums[last] + w2;
            means[last] = (means[last] * wsums[last] + m2 * w2) / merged_w;
            wsums[last] = merged_w;
            counts[last] += c2;
        }
    }
    let mut fitted = Vec::with_capacity(values.len());
    for ((m, _), c) in means.iter().zip(&wsums).zip(&counts) {
        fitted.extend(std::iter::repeat_n(*m, *c));
    }
    Ok(fitted)
}

fn scores_of(samples: &[Sample]) -> Vec<f64> {
    samples.iter().map(|s| s.score).collect()
}

/// Per-bin posterior rates over an equal-frequency partition. Bins left
/// empty (possible only after boundary collapses) are merged leftward.
fn bin_posteriors(samples: &[Sample], partition: &BinPartition) -> Result<(BinPartition, Vec<f64>, Vec<f64>)> {
    let k = partition.bin_count();
    let mut pos = vec![0.0f64; k];
    let mut cnt = vec![0.0f64; k];
    for s in samples {
        let idx = partition.bin_index(s.score)?;
        pos[idx] += s.label_f64();
        cnt[idx] += 1.0;
    }
    if cnt.iter().all(|&c| c > 0.0) {
        let posteriors = pos.iter().zip(&cnt).map(|(&p, &c)| p / c).collect();
        return Ok((partition.clone(), posteriors, cnt));
    }
    // merge empty bins into their left neighbor (right neighbor for bin 0)
    let bounds = partition.boundaries();
    let mut new_bounds = vec![bounds[0]];
    let mut new_pos = Vec::new();
    let mut new_cnt = Vec::new();
    for i in 0..k {
        if new_cnt.is_empty() {
            new_pos.push(pos[i]);
            new_cnt.push(cnt[i]);
        } else if cnt[i] == 0.0 || *new_cnt.last().unwrap() == 0.0 {
            *new_pos.last_mut().unwrap() += pos[i];
            *new_cnt.last_mut().unwrap() += cnt[i];
            new_bounds.pop();
        } else {
            new_pos.push(pos[i]);
            new_cnt.push(cnt[i]);
        }
        new_bounds.push(bounds[i + 1]);
    }
    if new_cnt.contains(&0.0) {
        return Err(McnError::InvalidInput(
            "cannot form any non-empty bin from the given samples".into(),
        ));
    }
    let posteriors = new_pos.iter().zip(&new_cnt).map(|(&p, &c)| p / c).collect();
    Ok((BinPartition::new(new_bounds)?, posteriors, new_cnt))
}

/// Histogram binning: equal-frequency bins, each calibrated to its
/// empirical posterior rate.
pub fn histogram_fit(samples: &[Sample], k: usize) -> Result<PiecewiseConstantCalibrator> {
    if samples.is_empty() {
        return Err(McnError::InvalidInput("histogram fit on empty input".into()));
    }
    let partition = fit_bins(&scores_of(samples), k, 0.0, 1.0)?;
    let (partition, posteriors, _) = bin_posteriors(samples, &partition)?;
    PiecewiseConstantCalibrator::new(partition, posteriors)
}

/// Isotonic regression: pool-adjacent-violators over score-sorted labels,
/// yielding a non-decreasing step function.
pub fn isotonic_fit(samples: &[Sample]) -> Result<PiecewiseConstantCalibrator> {
    if samples.is_empty() {
        return Err(McnError::InvalidInput("isotonic fit on empty input".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));
    let values: Vec<f64> = order.iter().map(|&i| samples[i].label_f64()).collect();
    let weights = vec![1.0; values.len()];
    let fitted = pav(&values, &weights)?;

    // compress equal-fitted runs into bins; boundaries at midpoints between
    // the last score of one block and the first score of the next
    let mut boundaries = vec![0.0];
    let mut posteriors = vec![fitted[0]];
    for i in 1..fitted.len() {
        if fitted[i] != fitted[i - 1] {
            let prev_score = samples[order[i - 1]].score;
            let next_score = samples[order[i]].score;
            let boundary = 0.5 * (prev_score + next_score);
            if boundary > *boundaries.last().unwrap() && boundary < 1.0 {
                boundaries.push(boundary);
                posteriors.push(fitted[i]);
            } else {
                // tied scores straddling a block edge: keep the later value
                *posteriors.last_mut().unwrap() = fitted[i];
            }
        }
    }
    boundaries.push(1.0);
    PiecewiseConstantCalibrator::new(BinPartition::new(boundaries)?, posteriors)
}

/// Platt scaling fitted by damped Newton on the logloss of
/// `sigmoid(a * logit(score) + b)`.
pub fn platt_fit(samples: &[Sample], max_iter: usize, tol: f64) -> Result<PlattCalibrator> {
    if samples.is_empty() {
        return Err(McnError::InvalidInput("platt fit on empty input".into()));
    }
    let n_pos = samples.iter().filter(|s| s.label).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(McnError::InvalidInput(
            "platt fit needs both classes present".into(),
        ));
    }
    let z: Vec<f64> = samples
        .iter()
        .map(|s| logit(s.score.clamp(1e-12, 1.0 - 1e-12)))
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.label_f64()).collect();
    let n = samples.len() as f64;

    let mut a = 1.0;
    let mut b = 0.0;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = 0.0;
        let mut hab = 0.0;
        let mut hbb = 0.0;
        for (&zi, &yi) in z.iter().zip(&y) {
            let p = sigmoid(a * zi + b);
            let r = p - yi;
            ga += r * zi;
            gb += r;
            let s = p * (1.0 - p);
            haa += s * zi * zi;
            hab += s * zi;
            hbb += s;
        }
        ga /= n;
        gb /= n;
        haa /= n;
        hab /= n;
        hbb /= n;
        if ga.abs().max(gb.abs()) < tol {
            converged = true;
            break;
        }
        // ridge keeps the 2x2 solve stable when the Hessian degenerates
        let ridge = 1e-12;
        let det = (haa + ridge) * (hbb + ridge) - hab * hab;
        let (da, db) = if det.abs() > 1e-300 {
            (
                ((hbb + ridge) * ga - hab * gb) / det,
                ((haa + ridge) * gb - hab * ga) / det,
            )
        } else {
            (ga, gb)
        };
        // backtracking keeps full Newton steps from overshooting
        let mut step = 1.0;
        let loss = |a: f64, b: f64| -> f64 {
            z.iter()
                .zip(&y)
                .map(|(&zi, &yi)| {
                    let p = sigmoid(a * zi + b).clamp(1e-15, 1.0 - 1e-15);
                    -yi * p.ln() - (1.0 - yi) * (1.0 - p).ln()
                })
                .sum::<f64>()
                / n
        };
        let base = loss(a, b);
        for _ in 0..30 {
            if loss(a - step * da, b - step * db) <= base {
                break;
            }
            step *= 0.5;
        }
        a -= step * da;
        b -= step * db;
    }
    Ok(PlattCalibrator {
        slope: a,
        intercept: b,
        converged,
    })
}

/// Smoothed isotonic regression: equal-frequency bin posteriors,
/// isotonized by PAV, joined by linear interpolation. Interior knots sit
/// at bin boundaries with the mean of the adjacent isotonized posteriors;
/// endpoint knots extend flat.
pub fn sir_fit(samples: &[Sample], k: usize) -> Result<PiecewiseLinearCalibrator> {
    if samples.is_empty() {
        return Err(McnError::InvalidInput("sir fit on empty input".into()));
    }
    let partition = fit_bins(&scores_of(samples), k, 0.0, 1.0)?;
    let (partition, posteriors, counts) = bin_posteriors(samples, &partition)?;
    let iso = pav(&posteriors, &counts)?;

    let bounds = partition.boundaries();
    let kk = iso.len();
    let mut knots_x = Vec::with_capacity(kk + 1);
    let mut knots_y = Vec::with_capacity(kk + 1);
    knots_x.push(bounds[0]);
    knots_y.push(iso[0]);
    for i in 1..kk {
        knots_x.push(bounds[i]);
        knots_y.push(0.5 * (iso[i - 1] + iso[i]));
    }
    knots_x.push(bounds[kk]);
    knots_y.push(iso[kk - 1]);
    PiecewiseLinearCalibrator::new(knots_x, knots_y)
}
