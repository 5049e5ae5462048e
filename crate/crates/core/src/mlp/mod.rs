//! Dense feed-forward regression networks trained from scratch.
//!
//! Layout conventions:
//! - Scalars are `f64`.
//! - A batch of `b` rows of width `d` is a flat row-major slice of length `b * d`.
//! - Layer weights are stored input-major: entry `(i, o)` lives at `i * out_dim + o`.
//! - Hidden layers apply the configured [`Activation`]; the readout layer is linear.
//!
//! Parameters flatten in a fixed order: for each layer, its weights (input-major)
//! followed by its bias.

mod optim;
mod tanh;
mod train;

pub use optim::{OptimizerKind, OptimizerSpec};
pub use train::{
    gradient_norm_variance, gradient_norm_variance_of, train_step, train_to_threshold, Dataset,
    TrainConfig, TrainTrace,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use optim::OptimizerState;
use tanh::tanh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    #[serde(rename = "ReLU", alias = "Relu", alias = "relu")]
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, values: &mut [f64]) {
        match self {
            Activation::Tanh => values.iter_mut().for_each(|v| *v = tanh(*v)),
            Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "Tanh",
            Activation::Relu => "ReLU",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Cap on the L2 norm of each layer's parameters (weights and bias together) at init.
    pub init_bound: f64,
}

impl MlpConfig {
    pub const DEFAULT_INIT_BOUND: f64 = 10.0;

    /// A scalar-to-scalar regressor, the shape used for every pairwise score.
    pub fn scalar(hidden_widths: &[usize], activation: Activation) -> Self {
        MlpConfig {
            input_dim: 1,
            output_dim: 1,
            hidden_widths: hidden_widths.to_vec(),
            activation,
            init_bound: Self::DEFAULT_INIT_BOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("input and output dimensions must be positive"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::config("at least one hidden layer is required"));
        }
        if let Some(pos) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("hidden layer {pos} has zero width")));
        }
        if !(self.init_bound > 0.0 && self.init_bound.is_finite()) {
            return Err(Error::config("init_bound must be positive and finite"));
        }
        Ok(())
    }

    /// Label such as `64-64-Tanh`.
    pub fn label(&self) -> String {
        let widths: Vec<String> = self.hidden_widths.iter().map(|w| w.to_string()).collect();
        format!("{}-{}", widths.join("-"), self.activation.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl Layer {
    /// Builds a layer from input-major weights and an optional bias.
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::ShapeMismatch { expected: in_dim * out_dim, actual: weights.len() });
        }
        if let Some(b) = &bias {
            if b.len() != out_dim {
                return Err(Error::ShapeMismatch { expected: out_dim, actual: b.len() });
            }
        }
        Ok(Layer { in_dim, out_dim, weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().map(|v| v * v).sum();
        let b: f64 = self.bias.iter().flatten().map(|v| v * v).sum();
        (w + b).sqrt()
    }

    fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|v| *v *= factor);
        self.bias.iter_mut().flatten().for_each(|v| *v *= factor);
    }

    /// `out[b] = bias + in[b] * W` for every row.
    fn forward_into(&self, input: &[f64], rows: usize, out: &mut [f64]) {
        let (id, od) = (self.in_dim, self.out_dim);
        match &self.bias {
            Some(b) => out.chunks_exact_mut(od).for_each(|y| y.copy_from_slice(b)),
            None => out.fill(0.0),
        }
        gemm(rows, id, od, input, (id, 1), &self.weights, (od, 1), out, 1.0);
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.bias.as_ref().map_or(0, Vec::len)]).collect(),
        }
    }

    fn zero(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|g| g.fill(0.0));
    }

    /// Gradient flattened in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().chain(&self.biases).flatten().map(|g| g * g).sum()
    }
}

/// A dense network plus the optimizer moments that belong to it.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    optimizer: OptimizerState,
}

impl Mlp {
    /// Builds a network from explicit layers. Shapes must chain.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch { expected: pair[0].out_dim, actual: pair[1].in_dim });
            }
        }
        Ok(Mlp { layers, activation, optimizer: OptimizerState::default() })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// L2 norm of each layer's parameters.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.layers.iter().map(Layer::norm).collect()
    }

    /// Parameters in flattening order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch { expected: self.num_params(), actual: params.len() });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            rest = tail;
            if let Some(b) = &mut l.bias {
                let (bv, tail) = rest.split_at(b.len());
                b.copy_from_slice(bv);
                rest = tail;
            }
        }
        Ok(())
    }

    /// Little-endian dump of every parameter, for bit-level comparisons.
    pub fn parameter_bytes(&self) -> Vec<u8> {
        self.flat_parameters().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Zeroes the readout layer so the network predicts exactly zero.
    pub fn zero_readout(&mut self) {
        let last = self.layers.last_mut().expect("nonempty");
        last.weights.fill(0.0);
        last.bias.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter().flatten()).all(|v| v.is_finite()))
    }

    /// Predictions for a flat batch of inputs.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let rows = self.check_rows(inputs, self.input_dim())?;
        let mut ws = Workspace::default();
        Ok(self.forward_batch(inputs, rows, &mut ws).to_vec())
    }

    /// Batch MSE and its parameter gradient, without touching the parameters.
    pub fn loss_and_gradient(&self, inputs: &[f64], targets: &[f64]) -> Result<(f64, Gradients)> {
        let rows = self.check_batch(inputs, targets)?;
        let mut ws = Workspace::default();
        let mut grads = Gradients::zeros_like(self);
        let loss = self.backprop(inputs, targets, rows, &mut ws, &mut grads);
        Ok((loss, grads))
    }

    /// Mean squared error over a batch.
    pub fn mse(&self, inputs: &[f64], targets: &[f64]) -> Result<f64> {
        let rows = self.check_batch(inputs, targets)?;
        let mut ws = Workspace::default();
        Ok(self.mse_with(inputs, targets, rows, &mut ws))
    }

    fn check_rows(&self, values: &[f64], width: usize) -> Result<usize> {
        if values.is_empty() || values.len() % width != 0 {
            return Err(Error::ShapeMismatch {
                expected: width * (values.len() / width).max(1),
                actual: values.len(),
            });
        }
        Ok(values.len() / width)
    }

    fn check_batch(&self, inputs: &[f64], targets: &[f64]) -> Result<usize> {
        let rows = self.check_rows(inputs, self.input_dim())?;
        if targets.len() != rows * self.output_dim() {
            return Err(Error::ShapeMismatch { expected: rows * self.output_dim(), actual: targets.len() });
        }
        Ok(rows)
    }

    fn forward_batch<'w>(&self, inputs: &[f64], rows: usize, ws: &'w mut Workspace) -> &'w [f64] {
        ws.ensure(self, rows);
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { inputs } else { &prev[l - 1][..rows * layer.in_dim] };
            let out = &mut next[0][..rows * layer.out_dim];
            layer.forward_into(input, rows, out);
            if l + 1 < n {
                self.activation.apply(out);
            }
        }
        &ws.acts[n - 1][..rows * self.output_dim()]
    }

    fn mse_with(&self, inputs: &[f64], targets: &[f64], rows: usize, ws: &mut Workspace) -> f64 {
        let pred = self.forward_batch(inputs, rows, ws);
        squared_error(pred, targets) / targets.len() as f64
    }

    /// Forward + backward pass. Accumulates into zeroed `grads`, returns the batch MSE.
    fn backprop(&self, inputs: &[f64], targets: &[f64], rows: usize, ws: &mut Workspace, grads: &mut Gradients) -> f64 {
        grads.zero();
        let n = self.layers.len();
        let od = self.output_dim();
        let count = (rows * od) as f64;
        self.forward_batch(inputs, rows, ws);

        let pred = &ws.acts[n - 1][..rows * od];
        let mut loss = 0.0;
        ws.delta.clear();
        ws.delta.extend(pred.iter().zip(targets).map(|(p, t)| {
            let r = p - t;
            loss += r * r;
            2.0 * r / count
        }));
        loss /= count;

        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (id, od) = (layer.in_dim, layer.out_dim);
            let input: &[f64] = if l == 0 { inputs } else { &ws.acts[l - 1][..rows * id] };
            let delta = &ws.delta[..rows * od];
            // dW = X^T * delta
            gemm(id, rows, od, input, (1, id), delta, (od, 1), &mut grads.weights[l], 0.0);
            if layer.bias.is_some() {
                let gb = &mut grads.biases[l];
                for d in delta.chunks_exact(od) {
                    axpy(1.0, d, gb);
                }
            }
            if l > 0 {
                ws.delta_prev.clear();
                ws.delta_prev.resize(rows * id, 0.0);
                // delta_prev = delta * W^T, then through the activation derivative.
                gemm(rows, od, id, delta, (od, 1), &layer.weights, (1, od), &mut ws.delta_prev, 0.0);
                for (dp, &a) in ws.delta_prev.iter_mut().zip(&input[..rows * id]) {
                    *dp *= self.activation.derivative_from_output(a);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        loss
    }

    /// Draws fresh weights: `U(-s, s)` with `s = sqrt(1 / fan_in)` for every weight
    /// and bias, in flattening order, then rescales any layer whose L2 norm exceeds
    /// `config.init_bound` down to exactly that bound.
    pub fn init(config: &MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut stream = Stream::new(seed);
        let mut dims = Vec::with_capacity(config.hidden_widths.len() + 2);
        dims.push(config.input_dim);
        dims.extend_from_slice(&config.hidden_widths);
        dims.push(config.output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (id, od) = (pair[0], pair[1]);
            let s = (1.0 / id as f64).sqrt();
            let weights: Vec<f64> = (0..id * od).map(|_| stream.symmetric(s)).collect();
            let bias: Vec<f64> = (0..od).map(|_| stream.symmetric(s)).collect();
            let mut layer = Layer { in_dim: id, out_dim: od, weights, bias: Some(bias) };
            let norm = layer.norm();
            if norm > config.init_bound {
                layer.scale(config.init_bound / norm);
            }
            layers.push(layer);
        }
        Ok(Mlp { layers, activation: config.activation, optimizer: OptimizerState::default() })
    }
}

/// Seeded network initialization. See [`Mlp::init`].
pub fn init_mlp(config: &MlpConfig, seed: u64) -> Result<Mlp> {
    Mlp::init(config, seed)
}

/// Reusable activation and delta buffers for batched passes.
#[derive(Debug, Default, Clone)]
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn ensure(&mut self, mlp: &Mlp, rows: usize) {
        if self.acts.len() != mlp.layers.len() {
            self.acts = vec![Vec::new(); mlp.layers.len()];
        }
        for (buf, layer) in self.acts.iter_mut().zip(&mlp.layers) {
            let need = rows * layer.out_dim;
            if buf.len() < need {
                buf.resize(need, 0.0);
            }
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c = a * b + beta * c` for row-major `c` of shape `m x n`; `a` is `m x k` and
/// `b` is `k x n`, each given with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64], beta: f64) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index addressed by the given shapes and strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), sa.0 as isize, sa.1 as isize,
            b.as_ptr(), sb.0 as isize, sb.1 as isize,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn squared_error(pred: &[f64], targets: &[f64]) -> f64 {
    pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum()
}
