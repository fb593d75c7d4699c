//! Clenshaw-Curtis quadrature on Chebyshev-Lobatto nodes, plus the
//! forward- and backward-integration passes used by the monotonic
//! calibration function.
//!
//! The backward pass integrates gradients node by node instead of
//! differentiating stored quadrature state, so no per-node activations
//! are retained across the integral.

use std::f64::consts::PI;

use crate::error::{McnError, Result};
use crate::nn::{DenseNet, ForwardCache, NetGrads};

/// A T-point Clenshaw-Curtis rule over [-1, 1].
///
/// Nodes are the Chebyshev-Lobatto points `cos(j*pi/(T-1))` in ascending
/// order; weights are the classical closed-form Clenshaw-Curtis weights.
/// The rule integrates polynomials of degree <= T-1 exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CcqRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CcqRule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(McnError::InvalidConfig(format!(
                "quadrature needs at least 2 steps, got {steps}"
            )));
        }
        let n = steps - 1; // number of intervals
        let mut nodes = Vec::with_capacity(steps);
        let mut weights = Vec::with_capacity(steps);
        for j in 0..=n {
            // ascending: theta runs from pi down to 0
            let theta = (n - j) as f64 * PI / n as f64;
            nodes.push(theta.cos());
            let theta_w = j as f64 * PI / n as f64; // weights are symmetric in j
            let mut sum = 0.0;
            for k in 1..=n / 2 {
                let b = if 2 * k == n { 1.0 } else { 2.0 };
                sum += b * (2.0 * k as f64 * theta_w).cos() / ((4 * k * k - 1) as f64);
            }
            let c = if j == 0 || j == n { 1.0 } else { 2.0 };
            weights.push(c / n as f64 * (1.0 - sum));
        }
        // exact endpoint symmetry
        nodes[0] = -1.0;
        nodes[n] = 1.0;
        if n.is_multiple_of(2) {
            nodes[n / 2] = 0.0;
        }
        Ok(CcqRule { nodes, weights })
    }

    pub fn steps(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature approximation of `integral of f over [p0, p]`.
    ///
    /// Nodes are mapped affinely onto [p0, p]; the result is exact for
    /// polynomial integrands of degree <= T-1 and zero when `p == p0`.
    /// `p < p0` yields the signed integral. Errors if the integrand is
    /// non-finite at any node.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, p0: f64, p: f64, mut integrand: F) -> Result<f64> {
        if p == p0 {
            return Ok(0.0);
        }
        let half_width = 0.5 * (p - p0);
        let mut acc = 0.0;
        for (&node, &w) in self.nodes.iter().zip(&self.weights) {
            let t = p0 + half_width * (node + 1.0);
            let v = integrand(t);
            if !v.is_finite() {
                return Err(McnError::NonFinite(format!("integrand at node t={t}: {v}")));
            }
            acc += w * v;
        }
        Ok(acc * half_width)
    }
}

/// Batched gradients of `sum_j upstream[j] * integral_{p0}^{p[j]} f1([t, h_j]) dt`
/// with respect to `f1`'s parameters and each sample's embedding `h_j`.
///
/// `f1` must be a scalar-output network whose input is `[t, h...]`; the
/// embedding slices must all have length `f1.input_dim() - 1`. Gradients
/// are accumulated node-by-node in a fixed order, so results are
/// bitwise reproducible.
pub fn integrate_backward(
    f1: &DenseNet,
    rule: &CcqRule,
    p0: f64,
    upper_bounds: &[f64],
    embeddings: &[&[f64]],
    upstream: &[f64],
) -> Result<(NetGrads, Vec<Vec<f64>>)> {
    let mut grads = NetGrads::zeros_like(f1);
    let mut embed_grads: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|h| vec![0.0; h.len()])
        .collect();
    integrate_backward_acc(
        f1,
        rule,
        p0,
        upper_bounds,
        embeddings,
        upstream,
        &mut grads,
        &mut embed_grads,
    )?;
    Ok((grads, embed_grads))
}

/// Accumulating variant of [`integrate_backward`]; adds into `grads` and
/// `embed_grads` so callers can fold several terms into one buffer.
#[allow(clippy::too_many_arguments)]
pub fn integrate_backward_acc(
    f1: &DenseNet,
    rule: &CcqRule,
    p0: f64,
    upper_bounds: &[f64],
    embeddings: &[&[f64]],
    upstream: &[f64],
    grads: &mut NetGrads,
    embed_grads: &mut [Vec<f64>],
) -> Result<()> {
    if upper_bounds.len() != upstream.len() || upper_bounds.len() != embeddings.len() {
        return Err(McnError::DimensionMismatch(format!(
            "integrate_backward batch: {} bounds, {} embeddings, {} upstream grads",
            upper_bounds.len(),
            embeddings.len(),
            upstream.len()
        )));
    }
    let embed_dim = f1.input_dim() - 1;
    let mut input = vec![0.0; f1.input_dim()];
    let mut input_grad = vec![0.0; f1.input_dim()];
    let mut cache = ForwardCache::default();
    for (j, ((&p, h), &g)) in upper_bounds
        .iter()
        .zip(embeddings.iter())
        .zip(upstream.iter())
        .enumerate()
    {
        if !g.is_finite() {
            return Err(McnError::NonFinite(format!("upstream gradient {j}: {g}")));
        }
        if h.len() != embed_dim {
            return Err(McnError::DimensionMismatch(format!(
                "embedding {j} has length {}, expected {embed_dim}",
                h.len()
            )));
        }
        if g == 0.0 || p == p0 {
            continue;
        }
        let half_width = 0.5 * (p - p0);
        input[1..].copy_from_slice(h);
        for (&node, &w) in rule.nodes().iter().zip(rule.weights()) {
            input[0] = p0 + half_width * (node + 1.0);
            f1.forward_cached(&input, &mut cache)?;
            input_grad.iter_mut().for_each(|v| *v = 0.0);
            f1.backward_cached(&mut cache, &[1.0], w * g * half_width, grads, &mut input_grad)?;
            for (eg, ig) in embed_grads[j].iter_mut().zip(&input_grad[1..]) {
                *eg += ig;
            }
        }
    }
    Ok(())
}
