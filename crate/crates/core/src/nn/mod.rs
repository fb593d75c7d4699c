//! Minimal feedforward-network engine: parameter containers, forward
//! evaluation, exact reverse-mode gradients, and an Adam optimizer.
//!
//! Just enough machinery to train the small per-bin networks of the
//! calibrator. Everything is `f64`; shapes are validated at the API
//! boundary and panics are reserved for internal invariant violations.

mod adam;

pub use adam::{adam_step, AdamState};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{McnError, Result};

/// Element-wise activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = apply(z)`.
    #[inline]
    fn derivative_from_output(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Numerically stable logistic function, strictly inside (0,1) for finite
/// input. The raw expression saturates to exactly 0 or 1 in f64 around
/// |z| > 36, so outputs are nudged to the nearest representable interior
/// value to keep strict positivity.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        let e = (-z).exp();
        1.0 / (1.0 + e)
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// One dense layer `y = act(Wx + b)`. Weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// A small fully-connected network.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

/// Gradients shaped exactly like a [`DenseNet`]'s parameters.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g = 0.0);
            l.bias.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Reusable buffers for a forward pass that retains per-layer state for
/// the subsequent backward pass.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    // inputs[i] is the input to layer i; inputs[L] is the network output.
    inputs: Vec<Vec<f64>>,
    // pre_acts[i] holds z = Wx + b of layer i.
    pre_acts: Vec<Vec<f64>>,
    // scratch for the backward delta propagation
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl DenseNet {
    /// Builds a network with the given layer dimensions and activations.
    ///
    /// Weights are drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// biases start at zero. Deterministic for a fixed seed.
    pub fn init(layer_dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(McnError::InvalidConfig(
                "a network needs at least an input and an output dimension".into(),
            ));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(McnError::InvalidConfig(format!(
                "expected {} activations for {} dims, got {}",
                layer_dims.len() - 1,
                layer_dims.len(),
                activations.len()
            )));
        }
        if layer_dims.contains(&0) {
            return Err(McnError::InvalidConfig(
                "layer dimensions must be positive".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &act) in activations.iter().enumerate() {
            let in_dim = layer_dims[i];
            let out_dim = layer_dims[i + 1];
            let limit = 1.0 / (in_dim as f64).sqrt();
            let weights: Vec<f64> = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                bias: vec![0.0; out_dim],
                activation: act,
            });
        }
        Ok(DenseNet {
            input_dim: layer_dims[0],
            output_dim: *layer_dims.last().unwrap(),
            layers,
        })
    }

    /// Builds a network from explicit layers (used by tests and model loading).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(McnError::InvalidConfig("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(McnError::DimensionMismatch(format!(
                    "layer output dim {} does not chain into next input dim {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(McnError::DimensionMismatch(
                    "layer parameter lengths do not match declared dims".into(),
                ));
            }
        }
        Ok(DenseNet {
            input_dim: layers[0].in_dim,
            output_dim: layers.last().unwrap().out_dim,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Evaluates the network. Pure: identical inputs give identical outputs.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim {
            return Err(McnError::DimensionMismatch(format!(
                "input length {} != input dim {}",
                input.len(),
                self.input_dim
            )));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.resize(layer.out_dim, 0.0);
            affine_into(layer, &cur, &mut next);
            for v in next.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Scalar convenience for 1-output networks.
    pub fn forward_scalar(&self, input: &[f64]) -> Result<f64> {
        let out = self.forward(input)?;
        debug_assert_eq!(out.len(), 1);
        Ok(out[0])
    }

    /// Forward pass retaining the per-layer state needed by
    /// [`DenseNet::backward_cached`]. Buffers inside `cache` are reused.
    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(McnError::DimensionMismatch(format!(
                "input length {} != input dim {}",
                input.len(),
                self.input_dim
            )));
        }
        let n_layers = self.layers.len();
        cache.inputs.resize(n_layers + 1, Vec::new());
        cache.pre_acts.resize(n_layers, Vec::new());
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = cache.inputs.split_at_mut(i + 1);
            let x = &head[i];
            let z = &mut cache.pre_acts[i];
            z.clear();
            z.resize(layer.out_dim, 0.0);
            affine_into(layer, x, z);
            let out = &mut tail[0];
            out.clear();
            out.extend(z.iter().map(|&zv| layer.activation.apply(zv)));
        }
        Ok(())
    }

    /// Network output of the last `forward_cached` call.
    pub fn cached_output<'a>(&self, cache: &'a ForwardCache) -> &'a [f64] {
        &cache.inputs[self.layers.len()]
    }

    /// Reverse pass over the state of a prior `forward_cached` call.
    ///
    /// Accumulates `scale * d(upstream . output)/d(params)` into `grads` and
    /// adds the corresponding input gradient into `input_grad` (which must
    /// have length `input_dim`).
    pub fn backward_cached(
        &self,
        cache: &mut ForwardCache,
        upstream: &[f64],
        scale: f64,
        grads: &mut NetGrads,
        input_grad: &mut [f64],
    ) -> Result<()> {
        if upstream.len() != self.output_dim {
            return Err(McnError::DimensionMismatch(format!(
                "upstream length {} != output dim {}",
                upstream.len(),
                self.output_dim
            )));
        }
        debug_assert_eq!(input_grad.len(), self.input_dim);
        debug_assert_eq!(grads.layers.len(), self.layers.len());

        let delta = &mut cache.delta;
        delta.clear();
        delta.extend(upstream.iter().map(|&g| g * scale));

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_acts[i];
            let a = &cache.inputs[i + 1];
            // delta <- delta ⊙ act'(z)
            for (d, (&zv, &av)) in delta.iter_mut().zip(z.iter().zip(a.iter())) {
                *d *= layer.activation.derivative_from_output(zv, av);
            }
            let x = &cache.inputs[i];
            let lg = &mut grads.layers[i];
            for (r, &dr) in delta.iter().enumerate() {
                if dr != 0.0 {
                    let row = &mut lg.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (w, &xv) in row.iter_mut().zip(x.iter()) {
                        *w += dr * xv;
                    }
                }
                lg.bias[r] += dr;
            }
            // propagate: delta_next = W^T delta
            let delta_next = &mut cache.delta_next;
            delta_next.clear();
            delta_next.resize(layer.in_dim, 0.0);
            for (r, &dr) in delta.iter().enumerate() {
                if dr != 0.0 {
                    let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (dn, &w) in delta_next.iter_mut().zip(row.iter()) {
                        *dn += dr * w;
                    }
                }
            }
            std::mem::swap(delta, &mut cache.delta_next);
        }
        for (g, &d) in input_grad.iter_mut().zip(delta.iter()) {
            *g += d;
        }
        Ok(())
    }

    /// One-shot reverse-mode gradients of `upstream . forward(input)`.
    ///
    /// Returns parameter gradients (shaped like the network) and the
    /// gradient with respect to the input vector.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(NetGrads, Vec<f64>)> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)?;
        let mut grads = NetGrads::zeros_like(self);
        let mut input_grad = vec![0.0; self.input_dim];
        self.backward_cached(&mut cache, upstream, 1.0, &mut grads, &mut input_grad)?;
        Ok((grads, input_grad))
    }
}

#[inline]
fn affine_into(layer: &Layer, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
        let mut acc = layer.bias[r];
        for (&w, &xv) in row.iter().zip(x.iter()) {
            acc += w * xv;
        }
        *o = acc;
    }
}

/// Per-field context embeddings, one row per field id.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Rows drawn uniformly from `[-1/sqrt(dim), 1/sqrt(dim)]`, deterministic per seed.
    pub fn init(rows: usize, dim: usize, seed: u64) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(McnError::InvalidConfig(
                "embedding table needs positive row count and dimension".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = 1.0 / (dim as f64).sqrt();
        let data = (0..rows * dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Ok(EmbeddingTable { rows, dim, data })
    }

    pub fn from_data(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(McnError::DimensionMismatch(
                "embedding data length does not match rows*dim".into(),
            ));
        }
        Ok(EmbeddingTable { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, field: usize) -> Result<&[f64]> {
        if field >= self.rows {
            return Err(McnError::UnknownField {
                field,
                count: self.rows,
            });
        }
        Ok(&self.data[field * self.dim..(field + 1) * self.dim])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn params_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(w: Vec<f64>, b: Vec<f64>, in_dim: usize, act: Activation) -> DenseNet {
        let out_dim = b.len();
        DenseNet::from_layers(vec![Layer {
            in_dim,
            out_dim,
            weights: w,
            bias: b,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = DenseNet::init(&[1, 4, 1], &[Activation::Relu, Activation::Sigmoid], 7).unwrap();
        let b = DenseNet::init(&[1, 4, 1], &[Activation::Relu, Activation::Sigmoid], 7).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.bias, lb.bias);
        }
    }

    #[test]
    fn init_biases_are_zero() {
        let net = DenseNet::init(&[1, 4, 1], &[Activation::Relu, Activation::Identity], 3).unwrap();
        for l in net.layers() {
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_weights_within_support() {
        for seed in 0..5 {
            let net = DenseNet::init(
                &[3, 128, 128, 1],
                &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
                seed,
            )
            .unwrap();
            for l in net.layers() {
                let bound = 10.0 / (l.in_dim as f64).sqrt();
                assert!(l.weights.iter().all(|w| w.abs() <= bound));
            }
        }
    }

    #[test]
    fn init_rejects_bad_shapes() {
        assert!(DenseNet::init(&[1], &[], 0).is_err());
        assert!(DenseNet::init(&[1, 0, 1], &[Activation::Relu, Activation::Relu], 0).is_err());
        assert!(DenseNet::init(&[1, 4, 1], &[Activation::Relu], 0).is_err());
    }

    #[test]
    fn forward_identity_net() {
        let net = single_layer(vec![1.0], vec![0.0], 1, Activation::Identity);
        assert_eq!(net.forward(&[0.3]).unwrap(), vec![0.3]);
    }

    #[test]
    fn forward_affine() {
        let net = single_layer(vec![2.0], vec![1.0], 1, Activation::Identity);
        assert_eq!(net.forward(&[0.5]).unwrap(), vec![2.0]);
    }

    #[test]
    fn forward_sigmoid_of_zero() {
        let net = single_layer(vec![0.0], vec![0.0], 1, Activation::Sigmoid);
        for x in [-3.0, 0.0, 11.0] {
            assert_eq!(net.forward(&[x]).unwrap(), vec![0.5]);
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = single_layer(vec![1.0], vec![0.0], 1, Activation::Identity);
        assert!(net.forward(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let net = DenseNet::init(&[2, 4, 1], &[Activation::Relu, Activation::Sigmoid], 11).unwrap();
        let (grads, input_grad) = net.backward(&[0.3, -0.7], &[0.0]).unwrap();
        assert!(input_grad.iter().all(|&g| g == 0.0));
        for lg in &grads.layers {
            assert!(lg.weights.iter().all(|&g| g == 0.0));
            assert!(lg.bias.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn backward_hand_chain_rule() {
        let net = single_layer(vec![2.0], vec![1.0], 1, Activation::Identity);
        let (grads, input_grad) = net.backward(&[0.5], &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weights, vec![0.5]);
        assert_eq!(grads.layers[0].bias, vec![1.0]);
        assert_eq!(input_grad, vec![2.0]);
    }

    /// Central finite differences against every parameter and input component.
    fn check_grads_fd(net: &DenseNet, input: &[f64], upstream: &[f64]) {
        let (grads, input_grad) = net.backward(input, upstream).unwrap();
        let eval = |net: &DenseNet, input: &[f64]| -> f64 {
            net.forward(input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum()
        };
        let step = 1e-5;
        let check = |analytic: f64, plus: f64, minus: f64, what: &str| {
            let fd = (plus - minus) / (2.0 * step);
            let denom = analytic.abs().max(fd.abs()).max(1e-7);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "{what}: analytic {analytic} vs fd {fd}"
            );
        };
        for li in 0..net.layers().len() {
            for wi in 0..net.layers()[li].weights.len() {
                let mut plus = net.clone();
                plus.layers_mut()[li].weights[wi] += step;
                let mut minus = net.clone();
                minus.layers_mut()[li].weights[wi] -= step;
                check(
                    grads.layers[li].weights[wi],
                    eval(&plus, input),
                    eval(&minus, input),
                    &format!("layer {li} weight {wi}"),
                );
            }
            for bi in 0..net.layers()[li].bias.len() {
                let mut plus = net.clone();
                plus.layers_mut()[li].bias[bi] += step;
                let mut minus = net.clone();
                minus.layers_mut()[li].bias[bi] -= step;
                check(
                    grads.layers[li].bias[bi],
                    eval(&plus, input),
                    eval(&minus, input),
                    &format!("layer {li} bias {bi}"),
                );
            }
        }
        for ii in 0..input.len() {
            let mut plus = input.to_vec();
            plus[ii] += step;
            let mut minus = input.to_vec();
            minus[ii] -= step;
            check(
                input_grad[ii],
                eval(net, &plus),
                eval(net, &minus),
                &format!("input {ii}"),
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        for seed in 0..20u64 {
            let net = DenseNet::init(
                &[3, 8, 8, 1],
                &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
                seed,
            )
            .unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let input: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            check_grads_fd(&net, &input, &[1.0]);
        }
    }

    #[test]
    fn sigmoid_output_strictly_inside_unit_interval() {
        let net = DenseNet::init(&[2, 8, 1], &[Activation::Relu, Activation::Sigmoid], 5).unwrap();
        for x in [-1e6, -1.0, 0.0, 1.0, 1e6] {
            let out = net.forward(&[x, -x]).unwrap()[0];
            assert!(out > 0.0 && out < 1.0, "sigmoid output {out} escaped (0,1)");
        }
    }

    #[test]
    fn forward_is_pure() {
        let net = DenseNet::init(&[2, 8, 1], &[Activation::Relu, Activation::Sigmoid], 5).unwrap();
        let a = net.forward(&[0.2, 0.4]).unwrap();
        let b = net.forward(&[0.2, 0.4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_lookup_shape_and_bounds() {
        let table = EmbeddingTable::init(3, 4, 9).unwrap();
        for f in 0..3 {
            assert_eq!(table.lookup(f).unwrap().len(), 4);
        }
        assert!(matches!(
            table.lookup(3),
            Err(McnError::UnknownField { field: 3, count: 3 })
        ));
        assert!(table.params_finite());
    }
}
