//! Interpolation schedules for conditional probability paths.
//!
//! A schedule is the pair `(alpha_t, beta_t)` weighting the target and source
//! samples along the path `x_t = alpha_t * x1 + beta_t * x0`, together with
//! the time derivatives needed for velocity targets. Consistency requires
//! `alpha(0) = 0, alpha(1) = 1, beta(0) = 1, beta(1) = 0`.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    OptimalTransport,
}

/// Schedule evaluated at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEval {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
}

/// Interpolation schedule `(alpha_t, beta_t)` with derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kind: ScheduleKind,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self::optimal_transport()
    }
}

impl ScheduleParams {
    pub fn optimal_transport() -> Self {
        Self {
            kind: ScheduleKind::OptimalTransport,
        }
    }

    /// Evaluate `(alpha, beta, alpha_dot, beta_dot)` at `t in [0, 1]`.
    pub fn eval(&self, t: f64) -> Result<ScheduleEval> {
        if !(0.0..=1.0).contains(&t) {
            return Err(CoreError::InvalidTime(t));
        }
        match self.kind {
            ScheduleKind::OptimalTransport => Ok(ScheduleEval {
                alpha: t,
                beta: 1.0 - t,
                alpha_dot: 1.0,
                beta_dot: -1.0,
            }),
        }
    }
}

/// The linear (optimal transport) schedule: `(t, 1 - t, 1, -1)`.
pub fn ot_schedule(t: f64) -> Result<(f64, f64, f64, f64)> {
    let e = ScheduleParams::optimal_transport().eval(t)?;
    Ok((e.alpha, e.beta, e.alpha_dot, e.beta_dot))
}
