//! Calibration and ranking metrics: PCOC, field-level relative calibration
//! error, AUC, per-field dispersion, and expected calibration error.

use crate::error::{McnError, Result};

/// Default denominator guard for [`f_rce`].
pub const F_RCE_EPSILON: f64 = 0.01;

/// Predicted-over-observed ratio: `mean(preds) / mean(labels)`.
/// Undefined (error) without at least one positive label.
pub fn pcoc(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let mean_label = mean(labels);
    if mean_label <= 0.0 {
        return Err(McnError::InvalidInput(
            "pcoc undefined without positive labels".into(),
        ));
    }
    Ok(mean(preds) / mean_label)
}

/// Field-level relative calibration error: the size-weighted mean over
/// fields of the absolute prediction bias relative to observed outcomes,
///
/// `(1/N) * sum_c N_c * |sum_i (y_i - p_i) I_c| / sum_i (y_i + eps) I_c`.
pub fn f_rce(preds: &[f64], labels: &[f64], fields: &[usize], epsilon: f64) -> Result<f64> {
    check_lengths(preds, labels)?;
    if fields.len() != preds.len() {
        return Err(McnError::DimensionMismatch(
            "fields length differs from predictions".into(),
        ));
    }
    if epsilon <= 0.0 {
        return Err(McnError::InvalidConfig("f_rce epsilon must be > 0".into()));
    }
    let count = fields.iter().max().map_or(0, |&m| m + 1);
    let mut n_c = vec![0.0f64; count];
    let mut bias = vec![0.0f64; count];
    let mut denom = vec![0.0f64; count];
    for ((&p, &y), &c) in preds.iter().zip(labels).zip(fields) {
        n_c[c] += 1.0;
        bias[c] += y - p;
        denom[c] += y + epsilon;
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    for c in 0..count {
        if n_c[c] > 0.0 {
            total += n_c[c] * bias[c].abs() / denom[c];
        }
    }
    Ok(total / n)
}

/// Mann-Whitney AUC: probability a random positive outranks a random
/// negative, with half credit for ties. Errors on single-class input.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(McnError::InvalidInput(
            "auc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average ranks across tied score groups
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-indexed ranks i+1 ..= j+1 share the mean rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Per-field mean signed gap between prediction and label,
/// `DIFF_c = (1/N) * sum_i (p_i - y_i) * I_c(c_i)`, divided by the total
/// sample count. With `per_field_normalized` the divisor becomes the
/// field's own count instead (non-default variant).
pub fn diff_per_field(
    preds: &[f64],
    labels: &[f64],
    fields: &[usize],
    field_count: usize,
    per_field_normalized: bool,
) -> Result<Vec<f64>> {
    check_lengths(preds, labels)?;
    if fields.len() != preds.len() {
        return Err(McnError::DimensionMismatch(
            "fields length differs from predictions".into(),
        ));
    }
    let mut sums = vec![0.0f64; field_count];
    let mut counts = vec![0.0f64; field_count];
    for ((&p, &y), &c) in preds.iter().zip(labels).zip(fields) {
        if c >= field_count {
            return Err(McnError::UnknownField {
                field: c,
                count: field_count,
            });
        }
        sums[c] += p - y;
        counts[c] += 1.0;
    }
    let n = preds.len() as f64;
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if per_field_normalized {
                if c > 0.0 {
                    s / c
                } else {
                    0.0
                }
            } else {
                s / n
            }
        })
        .collect())
}

/// Population standard deviation, `sqrt(sum (x - mean)^2 / n)`.
pub fn population_std(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(McnError::InvalidInput(
            "standard deviation of empty set".into(),
        ));
    }
    let m = mean(values);
    let var = values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Ok(var.sqrt())
}

/// Expected calibration error over `bins` equal-width probability bins:
/// `sum_k (n_k/N) * |mean(pred_k) - mean(label_k)|`.
pub fn ece(preds: &[f64], labels: &[f64], bins: usize) -> Result<f64> {
    check_lengths(preds, labels)?;
    if bins == 0 {
        return Err(McnError::InvalidConfig("ece needs at least one bin".into()));
    }
    let mut sum_pred = vec![0.0f64; bins];
    let mut sum_label = vec![0.0f64; bins];
    let mut count = vec![0.0f64; bins];
    for (&p, &y) in preds.iter().zip(labels) {
        let k = ((p * bins as f64) as usize).min(bins - 1);
        sum_pred[k] += p;
        sum_label[k] += y;
        count[k] += 1.0;
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    for k in 0..bins {
        if count[k] > 0.0 {
            total += (count[k] / n) * (sum_pred[k] / count[k] - sum_label[k] / count[k]).abs();
        }
    }
    Ok(total)
}

/// Per-field slice of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldMetrics {
    pub field: usize,
    /// None when the field has no positive labels (PCOC undefined there).
    pub pcoc: Option<f64>,
    pub diff: f64,
    pub count: usize,
}

/// Aggregate calibration/ranking report for one prediction set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub pcoc: f64,
    pub f_rce: f64,
    pub auc: f64,
    pub ece: f64,
    pub per_field: Vec<FieldMetrics>,
    /// Population std of the per-field PCOCs (fields without positives excluded).
    pub pcoc_std: f64,
    pub diff_std: f64,
}

/// Computes the full report. `field_count` must cover every field id.
pub fn compute_report(
    preds: &[f64],
    labels: &[f64],
    fields: &[usize],
    field_count: usize,
) -> Result<MetricsReport> {
    let diffs = diff_per_field(preds, labels, fields, field_count, false)?;
    let mut per_field = Vec::with_capacity(field_count);
    let mut field_pcocs = Vec::new();
    for (c, &diff) in diffs.iter().enumerate() {
        let mut sum_p = 0.0;
        let mut sum_y = 0.0;
        let mut count = 0usize;
        for ((&p, &y), &f) in preds.iter().zip(labels).zip(fields) {
            if f == c {
                sum_p += p;
                sum_y += y;
                count += 1;
            }
        }
        let pcoc_c = if sum_y > 0.0 { Some(sum_p / sum_y) } else { None };
        if let Some(v) = pcoc_c {
            field_pcocs.push(v);
        }
        per_field.push(FieldMetrics {
            field: c,
            pcoc: pcoc_c,
            diff,
            count,
        });
    }
    let pcoc_std = if field_pcocs.is_empty() {
        0.0
    } else {
        population_std(&field_pcocs)?
    };
    Ok(MetricsReport {
        n: preds.len(),
        pcoc: pcoc(preds, labels)?,
        f_rce: f_rce(preds, labels, fields, F_RCE_EPSILON)?,
        auc: auc(preds, labels)?,
        ece: ece(preds, labels, 10)?,
        diff_std: population_std(&diffs)?,
        per_field,
        pcoc_std,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_lengths(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(McnError::InvalidInput("empty metric input".into()));
    }
    if preds.len() != labels.len() {
        return Err(McnError::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pcoc_hand_examples() {
        assert_eq!(pcoc(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 1.0);
        assert!((pcoc(&[0.8, 0.8], &[1.0, 0.0]).unwrap() - 1.6).abs() < 1e-15);
        assert!((pcoc(&[0.2, 0.2, 0.2, 0.2], &[0.0, 0.0, 0.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(pcoc(&[0.5], &[0.0]).is_err());
    }

    #[test]
    fn pcoc_of_empirical_mean_is_one() {
        let labels = [1.0, 0.0, 0.0, 1.0, 1.0];
        let m = labels.iter().sum::<f64>() / labels.len() as f64;
        let preds = vec![m; labels.len()];
        assert!((pcoc(&preds, &labels).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn f_rce_hand_examples() {
        let v = f_rce(&[0.6, 0.2], &[1.0, 0.0], &[0, 0], 0.01).unwrap();
        assert!((v - 0.2 / 1.02).abs() < 1e-12, "{v}");
        // perfect predictions
        let v = f_rce(&[1.0, 0.0], &[1.0, 0.0], &[0, 1], 0.01).unwrap();
        assert_eq!(v, 0.0);
        // two equal-size fields aggregate by plain average
        let preds = [0.5, 0.5, 0.3, 0.3];
        let labels = [1.0, 0.0, 0.0, 0.0];
        let fields = [0, 0, 1, 1];
        let by_hand = {
            let field0 = 2.0 * ((1.0f64 - 0.5) + (0.0 - 0.5)).abs() / (1.0 + 0.01 + 0.0 + 0.01);
            let field1 = 2.0 * ((0.0f64 - 0.3) + (0.0 - 0.3)).abs() / (0.01 + 0.01);
            (field0 + field1) / 4.0
        };
        let v = f_rce(&preds, &labels, &fields, 0.01).unwrap();
        assert!((v - by_hand).abs() < 1e-12, "{v} vs {by_hand}");
    }

    #[test]
    fn f_rce_field_relabel_invariance() {
        let preds = [0.6, 0.2, 0.4, 0.9, 0.1];
        let labels = [1.0, 0.0, 1.0, 1.0, 0.0];
        let fields = [0usize, 1, 0, 2, 1];
        let relabeled: Vec<usize> = fields.iter().map(|&c| [2, 0, 1][c]).collect();
        let a = f_rce(&preds, &labels, &fields, 0.01).unwrap();
        let b = f_rce(&preds, &labels, &relabeled, 0.01).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn auc_hand_examples() {
        assert_eq!(auc(&[0.1, 0.9], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.1], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
        assert!(auc(&[0.5, 0.6], &[1.0, 1.0]).is_err());
    }

    fn auc_double_loop(scores: &[f64], labels: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, (&si, &yi)) in scores.iter().zip(labels).enumerate() {
            for (&sj, &yj) in scores.iter().zip(labels).skip(i + 1) {
                let (pos, neg) = if yi == 1.0 && yj == 0.0 {
                    (si, sj)
                } else if yi == 0.0 && yj == 1.0 {
                    (sj, si)
                } else {
                    continue;
                };
                pairs += 1.0;
                if pos > neg {
                    num += 1.0;
                } else if pos == neg {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_invariant_under_increasing_transforms() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let scores: Vec<f64> = (0..200).map(|_| rng.random_range(0.01..0.99)).collect();
        let labels: Vec<f64> = (0..200).map(|_| f64::from(rng.random::<f64>() < 0.4)).collect();
        let base = auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|&s| s * s * s).collect();
        let logits: Vec<f64> = scores.iter().map(|&s| (s / (1.0 - s)).ln()).collect();
        assert!((auc(&cubed, &labels).unwrap() - base).abs() < 1e-15);
        assert!((auc(&logits, &labels).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn diff_per_field_hand_examples() {
        let d = diff_per_field(&[0.6, 0.2], &[1.0, 0.0], &[0, 0], 1, false).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);
        let d = diff_per_field(&[1.0, 0.0], &[1.0, 0.0], &[0, 1], 2, false).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        let d = diff_per_field(&[0.5, 0.5], &[0.0, 1.0], &[0, 1], 2, false).unwrap();
        assert_eq!(d, vec![0.25, -0.25]);
    }

    #[test]
    fn population_std_hand_examples() {
        assert!(population_std(&[0.1, 0.1, 0.1]).unwrap().abs() < 1e-15);
        assert!((population_std(&[0.0, 0.2]).unwrap() - 0.1).abs() < 1e-15);
        assert!((population_std(&[-0.25, 0.25]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ece_hand_examples() {
        assert_eq!(ece(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 10).unwrap(), 0.0);
        let v = ece(&[0.7, 0.7, 0.7, 0.7], &[1.0, 0.0, 1.0, 0.0], 10).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ece_permutation_invariance() {
        let preds = [0.1, 0.4, 0.8, 0.3, 0.6];
        let labels = [0.0, 1.0, 1.0, 0.0, 0.0];
        let a = ece(&preds, &labels, 10).unwrap();
        let b = ece(&[0.6, 0.3, 0.8, 0.4, 0.1], &[0.0, 0.0, 1.0, 1.0, 0.0], 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_per_field_shape() {
        let preds = [0.5, 0.6, 0.2, 0.9];
        let labels = [1.0, 0.0, 0.0, 1.0];
        let fields = [0usize, 0, 1, 1];
        let r = compute_report(&preds, &labels, &fields, 2).unwrap();
        assert_eq!(r.per_field.len(), 2);
        assert_eq!(r.per_field.iter().map(|f| f.count).sum::<usize>(), 4);
        assert!(r.per_field.iter().all(|f| f.pcoc.is_some()));
        // identical per-field pcocs give zero dispersion
        let r2 = compute_report(&[0.5, 0.5], &[1.0, 1.0], &[0, 1], 2);
        // single-class labels break auc; expect error rather than a report
        assert!(r2.is_err());
    }

    #[test]
    fn report_field_without_positives_excluded_from_std() {
        let preds = [0.5, 0.6, 0.2, 0.4];
        let labels = [1.0, 0.0, 0.0, 0.0];
        let fields = [0usize, 0, 1, 1];
        let r = compute_report(&preds, &labels, &fields, 2).unwrap();
        assert!(r.per_field[0].pcoc.is_some());
        assert!(r.per_field[1].pcoc.is_none());
        assert_eq!(r.pcoc_std, 0.0); // single defined pcoc, degenerate
    }

    #[test]
    fn per_field_pcoc_std_hand_example() {
        // two fields with per-field pcocs 0.9 and 1.1
        let preds = [0.9, 0.9, 1.1 / 2.0, 1.1 / 2.0];
        let labels = [1.0, 1.0, 1.0, 0.0];
        let fields = [0usize, 0, 1, 1];
        let r = compute_report(&preds, &labels, &fields, 2).unwrap();
        assert!((r.pcoc_std - 0.1).abs() < 1e-12, "{}", r.pcoc_std);
    }

    proptest! {
        #[test]
        fn auc_matches_double_loop(
            n in 4usize..100,
            seed in 0u64..200,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // quantized scores force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
            let n_pos = labels.iter().sum::<f64>();
            prop_assume!(n_pos > 0.0 && n_pos < n as f64);
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_double_loop(&scores, &labels);
            prop_assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
        }

        #[test]
        fn pcoc_metric_matches_definition(
            n in 1usize..60,
            seed in 0u64..100,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let preds: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
            labels[0] = 1.0;
            let expect = preds.iter().sum::<f64>() / labels.iter().sum::<f64>();
            prop_assert!((pcoc(&preds, &labels).unwrap() - expect).abs() < 1e-12);
        }
    }
}
