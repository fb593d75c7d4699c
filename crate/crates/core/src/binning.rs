//! Equal-frequency score binning.

use crate::error::{McnError, Result};

/// Bin boundaries `b_0 < b_1 < ... < b_K` over score space. Every score in
/// `[b_0, b_K)` maps to exactly one half-open bin `[b_k, b_{k+1})`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinPartition {
    boundaries: Vec<f64>,
}

impl BinPartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(McnError::InvalidConfig(
                "a partition needs at least two boundaries".into(),
            ));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(McnError::NonFinite("bin boundary".into()));
        }
        if boundaries.windows(2).any(|p| p[0] >= p[1]) {
            return Err(McnError::InvalidConfig(
                "bin boundaries must be strictly increasing".into(),
            ));
        }
        Ok(BinPartition { boundaries })
    }

    pub fn bin_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn lower(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn upper(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.lower() && score < self.upper()
    }

    /// The unique `k` with `b_k <= score < b_{k+1}` (left-closed intervals).
    pub fn bin_index(&self, score: f64) -> Result<usize> {
        if !self.contains(score) {
            return Err(McnError::ScoreOutOfRange {
                score,
                lo: self.lower(),
                hi: self.upper(),
            });
        }
        // partition_point: first boundary strictly greater than score
        let idx = self.boundaries.partition_point(|&b| b <= score);
        Ok(idx - 1)
    }
}

/// Equal-frequency binning: interior boundary `b_k` is the midpoint between
/// the `ceil(k*N/K)`-th sorted score and the next one (stable sort).
///
/// Duplicate boundaries produced by tied scores are collapsed, merging the
/// affected bins; the returned partition then has fewer than `k` bins, which
/// callers can detect by comparing `bin_count()` with the request.
pub fn fit_bins(scores: &[f64], k: usize, b0: f64, bk: f64) -> Result<BinPartition> {
    if k == 0 {
        return Err(McnError::InvalidConfig("bin count must be >= 1".into()));
    }
    if b0 >= bk {
        return Err(McnError::InvalidConfig(format!(
            "lower bound {b0} must be below upper bound {bk}"
        )));
    }
    if scores.len() < k {
        return Err(McnError::InvalidInput(format!(
            "need at least {k} scores to fit {k} bins, got {}",
            scores.len()
        )));
    }
    if let Some(&s) = scores.iter().find(|&&s| !(s >= b0 && s < bk)) {
        return Err(McnError::ScoreOutOfRange {
            score: s,
            lo: b0,
            hi: bk,
        });
    }

    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp); // stable, ties keep original order

    let n = sorted.len();
    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(b0);
    for bin in 1..k {
        // 1-indexed rank ceil(bin*N/K); midpoint with its successor
        let rank = (bin * n).div_ceil(k);
        let b = 0.5 * (sorted[rank - 1] + sorted[rank]);
        if b > *boundaries.last().unwrap() && b < bk {
            boundaries.push(b);
        }
    }
    boundaries.push(bk);
    BinPartition::new(boundaries)
}
