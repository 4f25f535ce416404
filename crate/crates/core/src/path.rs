//! Conditional probability paths and the regression objective.
//!
//! Given a pair `(x0, x1)` the conditional path at time `t` is the Gaussian
//! `N(alpha_t x1 + beta_t x0, sigma_b^2 t(1-t) I)`. With `sigma_b = 0` it
//! degenerates to the deterministic interpolation. Each draw carries the
//! regression targets for the velocity head and, when the bridge is active,
//! for the score head.

use crate::error::{CoreError, Result};
use crate::schedule::ScheduleParams;
use rand_chacha::ChaCha8Rng;

/// One point on a conditional path together with its regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x_t: Vec<f64>,
    pub v_target: Vec<f64>,
    pub s_target: Option<Vec<f64>>,
    pub t: f64,
}

/// Draw `x_t` from the conditional path and compute its targets.
///
/// With `sigma_b > 0` the bridge standard deviation is
/// `sigma_b * sqrt(t(1-t))`; the velocity target gains the bridge drift term
/// `(1-2t)/(2t(1-t)) * (x_t - mu_t)` and the score target is the gradient of
/// the log bridge density, `-(x_t - mu_t) / (sigma_b^2 t(1-t))`.
pub fn sample_conditional_path(
    x0: &[f64],
    x1: &[f64],
    t: f64,
    sigma_b: f64,
    sched: &ScheduleParams,
    rng: &mut ChaCha8Rng,
) -> Result<PathSample> {
    if x0.len() != x1.len() {
        return Err(CoreError::DimensionMismatch {
            expected: x0.len(),
            got: x1.len(),
        });
    }
    let e = sched.eval(t)?;
    let d = x0.len();
    let mu: Vec<f64> = (0..d).map(|i| e.alpha * x1[i] + e.beta * x0[i]).collect();
    let base_v: Vec<f64> = (0..d)
        .map(|i| e.alpha_dot * x1[i] + e.beta_dot * x0[i])
        .collect();

    if sigma_b == 0.0 {
        return Ok(PathSample {
            x_t: mu.clone(),
            v_target: base_v,
            s_target: None,
            t,
        });
    }

    let tv = t * (1.0 - t);
    if tv <= 0.0 {
        return Err(CoreError::SingularBridge(t));
    }
    let std = sigma_b * tv.sqrt();
    let noise = crate::rng::standard_normal(rng, d);
    let x_t: Vec<f64> = (0..d).map(|i| mu[i] + std * noise[i]).collect();
    let drift_coef = (1.0 - 2.0 * t) / (2.0 * tv);
    let v_target: Vec<f64> = (0..d)
        .map(|i| base_v[i] + drift_coef * (x_t[i] - mu[i]))
        .collect();
    let score_coef = -1.0 / (sigma_b * sigma_b * tv);
    let s_target: Vec<f64> = (0..d).map(|i| score_coef * (x_t[i] - mu[i])).collect();

    Ok(PathSample {
        x_t,
        v_target,
        s_target: Some(s_target),
        t,
    })
}

/// Mean over the batch of the squared velocity residual norm, plus the same
/// for the score head when targets are present.
///
/// `predictions` pairs a velocity estimate with an optional score estimate.
pub fn cfm_regression_loss(
    predictions: &[(Vec<f64>, Option<Vec<f64>>)],
    targets: &[PathSample],
) -> Result<f64> {
    if predictions.is_empty() || targets.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if predictions.len() != targets.len() {
        return Err(CoreError::UnequalBatchSizes(
            predictions.len(),
            targets.len(),
        ));
    }
    let n = targets.len() as f64;
    let mut v_acc = 0.0;
    let mut s_acc = 0.0;
    let mut any_score = false;
    for ((v_hat, s_hat), tgt) in predictions.iter().zip(targets) {
        if v_hat.len() != tgt.v_target.len() {
            return Err(CoreError::DimensionMismatch {
                expected: tgt.v_target.len(),
                got: v_hat.len(),
            });
        }
        v_acc += v_hat
            .iter()
            .zip(&tgt.v_target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        if let Some(s_tgt) = &tgt.s_target {
            let s_hat = s_hat.as_ref().ok_or(CoreError::DimensionMismatch {
                expected: s_tgt.len(),
                got: 0,
            })?;
            if s_hat.len() != s_tgt.len() {
                return Err(CoreError::DimensionMismatch {
                    expected: s_tgt.len(),
                    got: s_hat.len(),
                });
            }
            any_score = true;
            s_acc += s_hat
                .iter()
                .zip(s_tgt)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(v_acc / n + if any_score { s_acc / n } else { 0.0 })
}
