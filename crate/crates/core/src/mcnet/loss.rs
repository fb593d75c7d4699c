//! The three-term training loss and its exact gradients.
//!
//! Total loss = logloss + beta * order penalty + alpha * balance penalty.
//! The gradient pass re-evaluates the integrand node by node (integrating
//! the gradient) rather than differentiating stored quadrature state, and
//! accumulates in a fixed order so results are bitwise reproducible.

use crate::dataset::Sample;
use crate::error::{McnError, Result};
use crate::metrics::population_std;
use crate::nn::{ForwardCache, NetGrads};
use crate::quadrature::integrate_backward_acc;

use super::{ContextMode, McnetModel};

/// Mean negative log-likelihood. Predictions must already be clamped away
/// from 0 and 1.
pub fn logloss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(McnError::InvalidInput("logloss on empty input".into()));
    }
    if preds.len() != labels.len() {
        return Err(McnError::DimensionMismatch(
            "logloss preds/labels length mismatch".into(),
        ));
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        total += -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / n)
}

/// Field-balance penalty: population standard deviation of the per-field
/// signed prediction gaps.
pub fn balance_penalty(diffs: &[f64]) -> Result<f64> {
    population_std(diffs)
}

/// Order-preserving penalty: for every context and every pair of adjacent
/// bins, the positive part of the inversion between the two un-clamped
/// calibration functions evaluated at their shared boundary.
pub fn order_penalty(model: &McnetModel) -> Result<f64> {
    let mut total = 0.0;
    for (_, _, v) in order_violations(model)? {
        total += v;
    }
    Ok(total)
}

/// Positive-part inversions `(bin k, context, violation)` at each shared
/// boundary; entries with zero violation are omitted.
fn order_violations(model: &McnetModel) -> Result<Vec<(usize, usize, f64)>> {
    let k_bins = model.bin_count();
    let contexts: Vec<usize> = match model.context_mode {
        ContextMode::None => vec![0],
        ContextMode::Field => (0..model.field_count).collect(),
    };
    let mut out = Vec::new();
    for k in 0..k_bins.saturating_sub(1) {
        let boundary = model.partition.boundaries()[k + 1];
        for &c in &contexts {
            let left = model.bin_raw(k, boundary, model.embedding(k, c)?)?;
            let right = model.bin_raw(k + 1, boundary, model.embedding(k + 1, c)?)?;
            let v = left - right;
            if v > 0.0 {
                out.push((k, c, v));
            }
        }
    }
    Ok(out)
}

/// Loss decomposition for one batch (or a whole dataset).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub logloss: f64,
    pub order: f64,
    pub balance: f64,
    /// `logloss + beta * order + alpha * balance`.
    pub total: f64,
    /// Fraction of predictions that hit the output clamp.
    pub clamp_rate: f64,
}

/// Gradients shaped like a model's parameters, in flattening order.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub bins: Vec<BinGrads>,
    pub aux: Option<NetGrads>,
}

#[derive(Debug, Clone)]
pub struct BinGrads {
    pub f1: NetGrads,
    pub f2: NetGrads,
    /// Row-major embedding gradients; empty in context-free mode.
    pub h: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(model: &McnetModel) -> Self {
        ModelGrads {
            bins: model
                .bins
                .iter()
                .map(|b| BinGrads {
                    f1: NetGrads::zeros_like(&b.f1),
                    f2: NetGrads::zeros_like(&b.f2),
                    h: vec![0.0; b.h.as_ref().map_or(0, |h| h.data().len())],
                })
                .collect(),
            aux: model.aux.as_ref().map(NetGrads::zeros_like),
        }
    }

    /// Flattens into the same order as [`McnetModel::flatten_params`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.clear();
        for bin in &self.bins {
            for net in [&bin.f1, &bin.f2] {
                for layer in &net.layers {
                    out.extend_from_slice(&layer.weights);
                    out.extend_from_slice(&layer.bias);
                }
            }
            out.extend_from_slice(&bin.h);
        }
        if let Some(aux) = &self.aux {
            for layer in &aux.layers {
                out.extend_from_slice(&layer.weights);
                out.extend_from_slice(&layer.bias);
            }
        }
    }
}

/// Everything the backward pass needs from one forward sweep.
struct ForwardPass {
    terms: LossTerms,
    /// Per-sample position in model space (score, or clamped logit).
    xs: Vec<f64>,
    ks: Vec<usize>,
    preds: Vec<f64>,
    /// d(pred)/d(raw MCF output); zero where the clamp is active, the
    /// sigmoid slope in logit mode.
    dpred_draw: Vec<f64>,
    /// Per present field: signed mean gap and the field ids, plus a
    /// field-id -> slot lookup.
    diffs: Vec<f64>,
    present: Vec<usize>,
    field_slot: Vec<usize>,
    violations: Vec<(usize, usize, f64)>,
}

fn forward_pass(
    model: &McnetModel,
    samples: &[Sample],
    alpha: f64,
    beta: f64,
) -> Result<ForwardPass> {
    if samples.is_empty() {
        return Err(McnError::InvalidInput("loss over empty batch".into()));
    }
    let n = samples.len();
    let mut xs = Vec::with_capacity(n);
    let mut ks = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    let mut dpred_draw = Vec::with_capacity(n);
    let mut clamped = 0usize;

    let max_field = samples.iter().map(|s| s.field).max().unwrap_or(0);
    let mut field_slot = vec![usize::MAX; max_field + 1];
    let mut present: Vec<usize> = Vec::new();
    let mut diff_sums: Vec<f64> = Vec::new();

    for s in samples {
        let x = if model.logit_space {
            model.clamp_into_range(crate::baselines::logit(s.score))
        } else {
            s.score
        };
        let k = model.partition.bin_index(x)?;
        let raw = model.bin_raw(k, x, model.embedding(k, s.field)?)?;
        let (p, d) = if model.logit_space {
            let aux = model.aux.as_ref().expect("logit space implies aux");
            let shift = aux.forward_scalar(&s.features)?;
            let z = raw + shift;
            let p_sig = crate::nn::sigmoid(z);
            let p = p_sig.clamp(model.clamp, 1.0 - model.clamp);
            let d = if p == p_sig { p_sig * (1.0 - p_sig) } else { 0.0 };
            (p, d)
        } else {
            let p = raw.clamp(model.clamp, 1.0 - model.clamp);
            let d = if p == raw { 1.0 } else { 0.0 };
            (p, d)
        };
        if d == 0.0 {
            clamped += 1;
        }
        if !p.is_finite() {
            return Err(McnError::NonFinite(format!(
                "calibrated probability for score {}",
                s.score
            )));
        }
        let slot = field_slot[s.field];
        let slot = if slot == usize::MAX {
            field_slot[s.field] = present.len();
            present.push(s.field);
            diff_sums.push(0.0);
            present.len() - 1
        } else {
            slot
        };
        diff_sums[slot] += p - s.label_f64();
        xs.push(x);
        ks.push(k);
        preds.push(p);
        dpred_draw.push(d);
    }

    let diffs: Vec<f64> = diff_sums.iter().map(|&d| d / n as f64).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.label_f64()).collect();
    let log = logloss(&preds, &labels)?;
    let violations = order_violations(model)?;
    let order: f64 = violations.iter().map(|&(_, _, v)| v).sum();
    let balance = balance_penalty(&diffs)?;
    let total = log + beta * order + alpha * balance;
    if !total.is_finite() {
        return Err(McnError::NonFinite(format!(
            "loss (logloss {log}, order {order}, balance {balance})"
        )));
    }
    Ok(ForwardPass {
        terms: LossTerms {
            logloss: log,
            order,
            balance,
            total,
            clamp_rate: clamped as f64 / n as f64,
        },
        xs,
        ks,
        preds,
        dpred_draw,
        diffs,
        present,
        field_slot,
        violations,
    })
}

/// The weighted training loss and its raw term breakdown. With
/// `alpha == beta == 0` the total equals the logloss exactly.
pub fn total_loss(
    model: &McnetModel,
    samples: &[Sample],
    alpha: f64,
    beta: f64,
) -> Result<LossTerms> {
    Ok(forward_pass(model, samples, alpha, beta)?.terms)
}

/// Loss terms plus exact gradients of the total with respect to every
/// model parameter.
pub fn loss_gradients(
    model: &McnetModel,
    samples: &[Sample],
    alpha: f64,
    beta: f64,
) -> Result<(LossTerms, ModelGrads)> {
    let fp = forward_pass(model, samples, alpha, beta)?;
    let mut grads = ModelGrads::zeros_like(model);
    let n = samples.len() as f64;
    let m = fp.present.len() as f64;
    let diff_mean = fp.diffs.iter().sum::<f64>() / m;

    // d(total)/d(raw MCF output) per sample
    let mut upstream = vec![0.0f64; samples.len()];
    for (j, s) in samples.iter().enumerate() {
        let p = fp.preds[j];
        let y = s.label_f64();
        let mut g = (p - y) / (p * (1.0 - p)) / n;
        if alpha > 0.0 && fp.terms.balance > 0.0 {
            let slot = fp.field_slot[s.field];
            g += alpha * (fp.diffs[slot] - diff_mean) / (m * fp.terms.balance) / n;
        }
        upstream[j] = g * fp.dpred_draw[j];
    }

    // integral term: batch the samples of each bin through the quadrature
    // backward pass, then scatter embedding gradients into h rows
    let mut cache = ForwardCache::default();
    let embed_dim = model.embed_dim;
    for k in 0..model.bin_count() {
        let members: Vec<usize> = (0..samples.len()).filter(|&j| fp.ks[j] == k).collect();
        if members.is_empty() {
            continue;
        }
        let bounds: Vec<f64> = members.iter().map(|&j| fp.xs[j]).collect();
        let embeds: Vec<&[f64]> = members
            .iter()
            .map(|&j| model.embedding(k, samples[j].field))
            .collect::<Result<_>>()?;
        let ups: Vec<f64> = members.iter().map(|&j| upstream[j]).collect();
        let mut embed_grads: Vec<Vec<f64>> = vec![vec![0.0; embed_dim]; members.len()];
        integrate_backward_acc(
            &model.bins[k].f1,
            &model.quad,
            model.lower_bound(k),
            &bounds,
            &embeds,
            &ups,
            &mut grads.bins[k].f1,
            &mut embed_grads,
        )?;
        // bias term f2 shares the same upstream and the same embedding input
        let mut input_grad = vec![0.0; embed_dim];
        for (idx, &j) in members.iter().enumerate() {
            let u = upstream[j];
            if u == 0.0 {
                continue;
            }
            let embed = model.embedding(k, samples[j].field)?;
            model.bins[k].f2.forward_cached(embed, &mut cache)?;
            input_grad.iter_mut().for_each(|v| *v = 0.0);
            model.bins[k].f2.backward_cached(
                &mut cache,
                &[1.0],
                u,
                &mut grads.bins[k].f2,
                &mut input_grad,
            )?;
            for (eg, ig) in embed_grads[idx].iter_mut().zip(&input_grad) {
                *eg += ig;
            }
        }
        if model.context_mode == ContextMode::Field {
            for (idx, &j) in members.iter().enumerate() {
                let row = samples[j].field * embed_dim;
                for (slot, g) in grads.bins[k].h[row..row + embed_dim]
                    .iter_mut()
                    .zip(&embed_grads[idx])
                {
                    *slot += g;
                }
            }
        }
    }

    // auxiliary net: the shift shares d(total)/d(z) with the MCF output
    if let Some(aux) = &model.aux {
        let aux_grads = grads.aux.as_mut().expect("aux grads allocated");
        let mut input_grad = vec![0.0; aux.input_dim()];
        for (j, s) in samples.iter().enumerate() {
            let u = upstream[j];
            if u == 0.0 {
                continue;
            }
            aux.forward_cached(&s.features, &mut cache)?;
            input_grad.iter_mut().for_each(|v| *v = 0.0);
            aux.backward_cached(&mut cache, &[1.0], u, aux_grads, &mut input_grad)?;
        }
    }

    // order penalty: +beta through the lower bin's function at the shared
    // boundary, -beta through the upper bin's
    if beta > 0.0 {
        for &(k, c, _v) in &fp.violations {
            let boundary = model.partition.boundaries()[k + 1];
            for (bin_idx, sign) in [(k, beta), (k + 1, -beta)] {
                let embed = model.embedding(bin_idx, c)?;
                let mut embed_grad = vec![vec![0.0; embed_dim]];
                integrate_backward_acc(
                    &model.bins[bin_idx].f1,
                    &model.quad,
                    model.lower_bound(bin_idx),
                    &[boundary],
                    &[embed],
                    &[sign],
                    &mut grads.bins[bin_idx].f1,
                    &mut embed_grad,
                )?;
                model.bins[bin_idx].f2.forward_cached(embed, &mut cache)?;
                let mut input_grad = vec![0.0; embed_dim];
                model.bins[bin_idx].f2.backward_cached(
                    &mut cache,
                    &[1.0],
                    sign,
                    &mut grads.bins[bin_idx].f2,
                    &mut input_grad,
                )?;
                if model.context_mode == ContextMode::Field {
                    let row = c * embed_dim;
                    for ((slot, g1), g2) in grads.bins[bin_idx].h[row..row + embed_dim]
                        .iter_mut()
                        .zip(&embed_grad[0])
                        .zip(&input_grad)
                    {
                        *slot += g1 + g2;
                    }
                }
            }
        }
    }

    Ok((fp.terms, grads))
}
