//! Mini-batch training, convergence detection and gradient instrumentation.

use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, MlpConfig, OptimizerSpec, Workspace};
use crate::error::{Error, Result};
use crate::rng::{tag, Stream};

/// Paired inputs and targets in flat row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    output_dim: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::config("dataset dimensions must be positive"));
        }
        if inputs.len() % input_dim != 0 {
            return Err(Error::ShapeMismatch { expected: input_dim, actual: inputs.len() % input_dim });
        }
        let rows = inputs.len() / input_dim;
        if targets.len() != rows * output_dim {
            return Err(Error::ShapeMismatch { expected: rows * output_dim, actual: targets.len() });
        }
        Ok(Dataset { inputs, targets, input_dim, output_dim })
    }

    /// One scalar input and one scalar target per row.
    pub fn scalar(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), y.to_vec(), 1, 1)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset {
            inputs: Vec::with_capacity(rows.len() * self.input_dim),
            targets: Vec::with_capacity(rows.len() * self.output_dim),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
        };
        for &r in rows {
            out.inputs.extend_from_slice(&self.inputs[r * self.input_dim..(r + 1) * self.input_dim]);
            out.targets.extend_from_slice(&self.targets[r * self.output_dim..(r + 1) * self.output_dim]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub t_max: u64,
    pub tau: f64,
    pub holdout_fraction: f64,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 64, t_max: 3000, tau: 0.05, holdout_fraction: 0.2, eval_every: 1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::config("holdout_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one run of [`train_to_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// First evaluated step with held-out MSE below `tau`, or `t_max`.
    pub steps_to_threshold: u64,
    pub converged: bool,
    /// A non-finite loss or gradient ended the run early; it counts as capped.
    pub diverged: bool,
    /// Pre-update mini-batch MSE, one entry per step taken.
    pub train_losses: Vec<f64>,
    /// Held-out MSE at steps `eval_every, 2 * eval_every, ...`.
    pub holdout_mse: Vec<f64>,
    pub eval_every: u64,
    pub final_holdout_mse: f64,
}

impl TrainTrace {
    /// Step index of each held-out evaluation.
    pub fn eval_steps(&self) -> impl Iterator<Item = u64> + '_ {
        (1..=self.holdout_mse.len() as u64).map(move |k| k * self.eval_every)
    }
}

/// Cycles through a dataset in reshuffled epochs.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    stream: Stream,
}

impl BatchSampler {
    fn new(n: usize, batch_size: usize, mut stream: Stream) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        stream.shuffle(&mut order);
        BatchSampler { order, cursor: 0, batch_size: batch_size.min(n), stream }
    }

    fn next_batch(&mut self, data: &Dataset, inputs: &mut Vec<f64>, targets: &mut Vec<f64>) {
        if self.cursor + self.batch_size > self.order.len() {
            self.stream.shuffle(&mut self.order);
            self.cursor = 0;
        }
        inputs.clear();
        targets.clear();
        let (id, od) = (data.input_dim, data.output_dim);
        for &r in &self.order[self.cursor..self.cursor + self.batch_size] {
            inputs.extend_from_slice(&data.inputs[r * id..(r + 1) * id]);
            targets.extend_from_slice(&data.targets[r * od..(r + 1) * od]);
        }
        self.cursor += self.batch_size;
    }
}

/// Owns the reusable buffers of a training loop.
struct Stepper {
    ws: Workspace,
    grads: Gradients,
}

impl Stepper {
    fn new(mlp: &Mlp) -> Self {
        Stepper { ws: Workspace::default(), grads: Gradients::zeros_like(mlp) }
    }

    fn step(&mut self, mlp: &mut Mlp, inputs: &[f64], targets: &[f64], opt: &OptimizerSpec, step: u64) -> Result<f64> {
        let rows = inputs.len() / mlp.input_dim();
        let loss = mlp.backprop(inputs, targets, rows, &mut self.ws, &mut self.grads);
        let grad_norm = self.grads.squared_norm().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged { step, loss, grad_norm });
        }
        mlp.apply_gradients(&self.grads, opt);
        Ok(loss)
    }
}

/// One optimizer step on the batch MSE. Returns the pre-update loss.
pub fn train_step(mlp: &mut Mlp, inputs: &[f64], targets: &[f64], opt: &OptimizerSpec) -> Result<f64> {
    opt.validate()?;
    mlp.check_batch(inputs, targets)?;
    let step = mlp.optimizer.steps + 1;
    Stepper::new(mlp).step(mlp, inputs, targets, opt, step)
}

fn split_rows(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    Stream::derived(seed, tag::SPLIT).shuffle(&mut order);
    let holdout = ((n as f64 * holdout_fraction).round() as usize).clamp(1, n - 1);
    let train = order.split_off(holdout);
    (train, order)
}

/// Trains a freshly initialized network until held-out MSE drops below `tau`.
///
/// The network weights, the train/held-out split and the batch order each come
/// from their own stream derived from `tc.seed`. Held-out MSE is measured after
/// every `eval_every`-th step; the first measurement below `tau` stops training.
/// A run that never gets there reports `t_max`, as does a diverged run.
pub fn train_to_threshold(config: &MlpConfig, data: &Dataset, tc: &TrainConfig, opt: &OptimizerSpec) -> Result<TrainTrace> {
    let mlp = Mlp::init(config, crate::rng::derive_seed(tc.seed, tag::INIT))?;
    train_network_to_threshold(mlp, data, tc, opt)
}

/// Same as [`train_to_threshold`] but starting from a supplied network.
pub(crate) fn train_network_to_threshold(mut mlp: Mlp, data: &Dataset, tc: &TrainConfig, opt: &OptimizerSpec) -> Result<TrainTrace> {
    tc.validate()?;
    opt.validate()?;
    if data.len() < 10 {
        return Err(Error::config(format!("need at least 10 rows, got {}", data.len())));
    }
    if data.input_dim != mlp.input_dim() || data.output_dim != mlp.output_dim() {
        return Err(Error::ShapeMismatch { expected: mlp.input_dim(), actual: data.input_dim });
    }
    let (train_rows, holdout_rows) = split_rows(data.len(), tc.holdout_fraction, tc.seed);
    let train = data.subset(&train_rows);
    let holdout = data.subset(&holdout_rows);

    let mut sampler = BatchSampler::new(train.len(), tc.batch_size, Stream::derived(tc.seed, tag::BATCH));
    let mut stepper = Stepper::new(&mlp);
    let mut eval_ws = Workspace::default();
    let (mut bx, mut by) = (Vec::new(), Vec::new());

    let mut trace = TrainTrace {
        steps_to_threshold: tc.t_max,
        converged: false,
        diverged: false,
        train_losses: Vec::new(),
        holdout_mse: Vec::new(),
        eval_every: tc.eval_every,
        final_holdout_mse: f64::NAN,
    };

    for step in 1..=tc.t_max {
        sampler.next_batch(&train, &mut bx, &mut by);
        match stepper.step(&mut mlp, &bx, &by, opt, step) {
            Ok(loss) => trace.train_losses.push(loss),
            Err(Error::Diverged { step, loss, grad_norm }) => {
                log::warn!("diverged at step {step}: loss {loss}, gradient norm {grad_norm}");
                trace.train_losses.push(loss);
                trace.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if step % tc.eval_every == 0 {
            let mse = mlp.mse_with(&holdout.inputs, &holdout.targets, holdout.len(), &mut eval_ws);
            trace.holdout_mse.push(mse);
            if !mse.is_finite() {
                trace.diverged = true;
                break;
            }
            if mse < tc.tau {
                trace.steps_to_threshold = step;
                trace.converged = true;
                break;
            }
        }
    }
    trace.final_holdout_mse = trace.holdout_mse.last().copied().unwrap_or(f64::NAN);
    Ok(trace)
}

/// Variance of squared mini-batch gradient norms after `at_step` training steps.
///
/// Initializes a network from `tc.seed`, trains it on the whole dataset for
/// `at_step` steps, then draws `n_batches` further mini-batches from an
/// independent stream and measures `|grad L|^2` on each without updating.
/// Returns the unbiased sample variance of those values.
pub fn gradient_norm_variance(
    config: &MlpConfig,
    data: &Dataset,
    tc: &TrainConfig,
    opt: &OptimizerSpec,
    n_batches: usize,
    at_step: u64,
) -> Result<f64> {
    let mut mlp = Mlp::init(config, crate::rng::derive_seed(tc.seed, tag::INIT))?;
    gradient_norm_variance_of(&mut mlp, data, tc.batch_size, opt, n_batches, at_step, tc.seed)
}

/// [`gradient_norm_variance`] on a supplied network, which is left trained.
pub fn gradient_norm_variance_of(
    mlp: &mut Mlp,
    data: &Dataset,
    batch_size: usize,
    opt: &OptimizerSpec,
    n_batches: usize,
    at_step: u64,
    seed: u64,
) -> Result<f64> {
    opt.validate()?;
    if n_batches < 2 {
        return Err(Error::config("need at least two probe batches"));
    }
    if batch_size == 0 || data.len() < batch_size {
        return Err(Error::config(format!("dataset of {} rows is smaller than batch size {batch_size}", data.len())));
    }
    if data.input_dim != mlp.input_dim() || data.output_dim != mlp.output_dim() {
        return Err(Error::ShapeMismatch { expected: mlp.input_dim(), actual: data.input_dim });
    }
    let mut stepper = Stepper::new(mlp);
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    let mut sampler = BatchSampler::new(data.len(), batch_size, Stream::derived(seed, tag::BATCH));
    for step in 1..=at_step {
        sampler.next_batch(data, &mut bx, &mut by);
        stepper.step(mlp, &bx, &by, opt, step)?;
    }

    let mut probe = BatchSampler::new(data.len(), batch_size, Stream::derived(seed, tag::PROBE));
    let mut norms = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        probe.next_batch(data, &mut bx, &mut by);
        let rows = bx.len() / mlp.input_dim();
        mlp.backprop(&bx, &by, rows, &mut stepper.ws, &mut stepper.grads);
        norms.push(stepper.grads.squared_norm());
    }
    Ok(sample_variance(&norms))
}

pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, Layer};

    fn affine(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(vec![Layer::new(1, 1, vec![w], Some(vec![b])).unwrap()], Activation::Tanh).unwrap()
    }

    fn line(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        Dataset::scalar(&x, &y).unwrap()
    }

    #[test]
    fn sgd_step_by_hand() {
        // d/dw (w*1 - 1)^2 = 2(w - 1) = -2 at w = 0.
        let mut m = Mlp::from_layers(vec![Layer::new(1, 1, vec![0.0], None).unwrap()], Activation::Tanh).unwrap();
        let loss = train_step(&mut m, &[1.0], &[1.0], &OptimizerSpec::sgd(0.1)).unwrap();
        assert_eq!(loss, 1.0);
        assert!((m.layers()[0].weights()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_sgd_parameters() {
        let mut m = affine(1.5, -0.5);
        let before = m.parameter_bytes();
        let x = [0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 * v - 0.5).collect();
        let loss = train_step(&mut m, &x, &y, &OptimizerSpec::sgd(0.3)).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(before, m.parameter_bytes());
    }

    #[test]
    fn non_finite_loss_is_diverged() {
        let mut m = affine(1.0, 0.0);
        let err = train_step(&mut m, &[f64::INFINITY], &[0.0], &OptimizerSpec::adam()).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }));
    }

    #[test]
    fn huge_tau_converges_at_first_eval() {
        let cfg = MlpConfig::scalar(&[4], Activation::Tanh);
        let tc = TrainConfig { tau: 1e9, eval_every: 7, ..TrainConfig::default() };
        let t = train_to_threshold(&cfg, &line(50), &tc, &OptimizerSpec::adam()).unwrap();
        assert!(t.converged);
        assert_eq!(t.steps_to_threshold, 7);
        assert_eq!(t.train_losses.len(), 7);
    }

    #[test]
    fn zero_targets_with_zero_readout() {
        let cfg = MlpConfig::scalar(&[8, 8], Activation::Tanh);
        let mut mlp = Mlp::init(&cfg, 1).unwrap();
        mlp.zero_readout();
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let data = Dataset::scalar(&x, &vec![0.0; 40]).unwrap();
        let t = train_network_to_threshold(mlp, &data, &TrainConfig::default(), &OptimizerSpec::adam()).unwrap();
        assert!(t.converged);
        assert_eq!(t.steps_to_threshold, 1);
        assert_eq!(t.holdout_mse[0], 0.0);
    }

    #[test]
    fn cap_is_respected() {
        let cfg = MlpConfig::scalar(&[4], Activation::Tanh);
        let tc = TrainConfig { tau: 1e-30, t_max: 25, eval_every: 4, ..TrainConfig::default() };
        let t = train_to_threshold(&cfg, &line(30), &tc, &OptimizerSpec::adam()).unwrap();
        assert!(!t.converged);
        assert_eq!(t.steps_to_threshold, 25);
        assert_eq!(t.holdout_mse.len(), 6);
        assert_eq!(t.eval_steps().collect::<Vec<_>>(), vec![4, 8, 12, 16, 20, 24]);
    }

    #[test]
    fn divergence_is_capped_not_fatal() {
        let cfg = MlpConfig::scalar(&[8], Activation::Relu);
        let tc = TrainConfig { tau: 1e-12, t_max: 200, ..TrainConfig::default() };
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1e3 * v).collect();
        let t = train_to_threshold(&cfg, &Dataset::scalar(&x, &y).unwrap(), &tc, &OptimizerSpec::sgd(10.0)).unwrap();
        assert!(t.diverged);
        assert!(!t.converged);
        assert_eq!(t.steps_to_threshold, 200);
    }

    #[test]
    fn small_dataset_rejected() {
        let cfg = MlpConfig::scalar(&[4], Activation::Tanh);
        let r = train_to_threshold(&cfg, &line(9), &TrainConfig::default(), &OptimizerSpec::adam());
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn variance_zero_at_optimum() {
        let mut m = affine(0.5, 0.0);
        let v = gradient_norm_variance_of(&mut m, &line(40), 8, &OptimizerSpec::sgd(0.01), 10, 0, 0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn variance_two_points_by_hand() {
        // Model y = w x with w = 0 on points (1, 1) and (2, -1); batch size 1.
        // Per-point gradient of (w x - y)^2 is 2 x (w x - y): -2 and 4.
        let mut m = Mlp::from_layers(vec![Layer::new(1, 1, vec![0.0], None).unwrap()], Activation::Tanh).unwrap();
        let data = Dataset::scalar(&[1.0, 2.0], &[1.0, -1.0]).unwrap();
        let v = gradient_norm_variance_of(&mut m, &data, 1, &OptimizerSpec::sgd(0.1), 2, 0, 3).unwrap();
        let (a, b) = (4.0f64, 16.0f64);
        let mean = (a + b) / 2.0;
        let expected = (a - mean).powi(2) + (b - mean).powi(2);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn variance_rejects_small_dataset() {
        let mut m = affine(0.0, 0.0);
        let data = Dataset::scalar(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(gradient_norm_variance_of(&mut m, &data, 4, &OptimizerSpec::adam(), 5, 0, 0).is_err());
        assert!(gradient_norm_variance_of(&mut m, &data, 1, &OptimizerSpec::adam(), 1, 0, 0).is_err());
    }
}
