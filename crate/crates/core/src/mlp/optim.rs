use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "SGD", alias = "Sgd", alias = "sgd")]
    Sgd,
    #[serde(alias = "adam")]
    Adam,
    #[serde(rename = "RMSProp", alias = "RmsProp", alias = "rmsprop")]
    RmsProp,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "SGD",
            OptimizerKind::Adam => "Adam",
            OptimizerKind::RmsProp => "RMSProp",
        }
    }
}

/// Optimizer hyperparameters. Fields that do not apply to `kind` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub rmsprop_decay: f64,
    pub epsilon: f64,
}

impl OptimizerSpec {
    /// Default step sizes: Adam and RMSProp 1e-3, SGD 1e-2.
    pub fn new(kind: OptimizerKind) -> Self {
        let step_size = match kind {
            OptimizerKind::Sgd => 1e-2,
            OptimizerKind::Adam | OptimizerKind::RmsProp => 1e-3,
        };
        OptimizerSpec { kind, step_size, adam_beta1: 0.9, adam_beta2: 0.999, rmsprop_decay: 0.9, epsilon: 1e-8 }
    }

    pub fn sgd(step_size: f64) -> Self {
        OptimizerSpec { step_size, ..Self::new(OptimizerKind::Sgd) }
    }

    pub fn adam() -> Self {
        Self::new(OptimizerKind::Adam)
    }

    pub fn rmsprop() -> Self {
        Self::new(OptimizerKind::RmsProp)
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("step size must be positive"));
        }
        match self.kind {
            OptimizerKind::Adam if !(open_unit(self.adam_beta1) && open_unit(self.adam_beta2)) => {
                return Err(Error::config("Adam betas must lie in (0, 1)"));
            }
            OptimizerKind::RmsProp if !open_unit(self.rmsprop_decay) => {
                return Err(Error::config("RMSProp decay must lie in (0, 1)"));
            }
            _ => {}
        }
        if self.kind != OptimizerKind::Sgd && !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Moment buffers, allocated on the first step. One buffer per parameter
/// tensor in flattening order (weights then bias, layer by layer).
#[derive(Debug, Clone, Default)]
pub(super) struct OptimizerState {
    pub(super) steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Mlp {
    pub(super) fn apply_gradients(&mut self, grads: &Gradients, opt: &OptimizerSpec) {
        let state = &mut self.optimizer;
        if state.first.is_empty() {
            for l in &self.layers {
                state.first.push(vec![0.0; l.weights.len()]);
                state.first.push(vec![0.0; l.bias.as_ref().map_or(0, Vec::len)]);
            }
            state.second = state.first.clone();
        }
        state.steps += 1;
        let t = state.steps as f64;

        let tensors = self.layers.iter_mut().flat_map(|l| {
            let bias: &mut [f64] = match &mut l.bias {
                Some(b) => b,
                None => &mut [],
            };
            [&mut l.weights[..], bias]
        });
        let grad_tensors = grads.weights.iter().zip(&grads.biases).flat_map(|(w, b)| [w, b]);

        for (((param, grad), m), v) in tensors.zip(grad_tensors).zip(&mut state.first).zip(&mut state.second) {
            match opt.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in param.iter_mut().zip(grad) {
                        *p -= opt.step_size * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (b1, b2) = (opt.adam_beta1, opt.adam_beta2);
                    let c1 = 1.0 - b1.powf(t);
                    let c2 = 1.0 - b2.powf(t);
                    for (((p, &g), mi), vi) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (1.0 - b1) * g;
                        *vi = b2 * *vi + (1.0 - b2) * g * g;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *p -= opt.step_size * m_hat / (v_hat.sqrt() + opt.epsilon);
                    }
                }
                OptimizerKind::RmsProp => {
                    let rho = opt.rmsprop_decay;
                    for ((p, &g), vi) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
                        *vi = rho * *vi + (1.0 - rho) * g * g;
                        *p -= opt.step_size * g / (vi.sqrt() + opt.epsilon);
                    }
                }
            }
        }
    }
}
