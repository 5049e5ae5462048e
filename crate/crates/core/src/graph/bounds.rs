use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest MDL weight at which one extra edge no longer pays for itself:
/// `(1 - gamma) ln(v) / e_max`.
pub fn lambda2_threshold(gamma: f64, v: f64, e_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config("gamma must lie in [0, 1]"));
    }
    if !(v >= 2.0) || !(e_max >= 1.0) {
        return Err(Error::config("need v >= 2 and e_max >= 1"));
    }
    Ok((1.0 - gamma) * v.ln() / e_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacBoundInputs {
    /// Causal complexity, taken as the edge count of the learned graph.
    pub d_c: f64,
    pub tau_mix: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
}

/// Sample-size bound `C tau_mix d_c ln(d_c / delta) / ((1 - gamma)^3 epsilon^2)`.
///
/// A theoretical bound, not a certificate: `C` and `tau_mix` are user plug-ins.
pub fn compute_pac_bound(p: &PacBoundInputs) -> Result<f64> {
    let in_open_unit = |v: f64| v > 0.0 && v < 1.0;
    if !(p.d_c > 0.0 && p.tau_mix > 0.0 && p.c > 0.0) {
        return Err(Error::config("d_c, tau_mix and C must be positive"));
    }
    if !(0.0..1.0).contains(&p.gamma) || !in_open_unit(p.epsilon) && p.epsilon != 1.0 || !in_open_unit(p.delta) {
        return Err(Error::config("need gamma in [0, 1), epsilon in (0, 1] and delta in (0, 1)"));
    }
    let ratio = p.d_c / p.delta;
    if ratio <= 1.0 {
        return Err(Error::NonPositiveLog(ratio));
    }
    Ok(p.c * p.tau_mix * p.d_c * ratio.ln() / ((1.0 - p.gamma).powi(3) * p.epsilon * p.epsilon))
}
