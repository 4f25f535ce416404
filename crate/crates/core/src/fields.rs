//! Closed-form reference velocity fields.
//!
//! These serve as independent oracles: they realize paths whose marginals,
//! velocities and scores are known analytically, so integrators and the
//! score formula can be checked without involving a trained network.

use crate::error::Result;
use crate::model::VelocityField;

/// Marginal velocity of the path from `N(0, I)` to `N(mu, I)` under the
/// linear schedule with independent coupling. The marginal at time `t` is
/// `N(t mu, (t^2 + (1-t)^2) I)` with velocity
/// `v(x, t) = mu + (2t - 1)/(t^2 + (1-t)^2) (x - t mu)` and score
/// `-(x - t mu) / (t^2 + (1-t)^2)`.
pub struct GaussianPathField {
    pub mu: Vec<f64>,
}

impl GaussianPathField {
    pub fn new(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn marginal_var(t: f64) -> f64 {
        t * t + (1.0 - t) * (1.0 - t)
    }

    pub fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let s2 = Self::marginal_var(t);
        x.iter()
            .zip(&self.mu)
            .map(|(xi, mi)| -(xi - t * mi) / s2)
            .collect()
    }
}

impl VelocityField for GaussianPathField {
    fn data_dim(&self) -> usize {
        self.mu.len()
    }

    fn velocity_batch(&self, xs: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>> {
        let s2 = Self::marginal_var(t);
        Ok(xs
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&self.mu)
                    .map(|(xi, mi)| mi + (2.0 * t - 1.0) / s2 * (xi - t * mi))
                    .collect()
            })
            .collect())
    }
}

/// A constant field `v(x, t) = c`.
pub struct ConstantField {
    pub c: Vec<f64>,
}

impl VelocityField for ConstantField {
    fn data_dim(&self) -> usize {
        self.c.len()
    }

    fn velocity_batch(&self, xs: &[Vec<f64>], _t: f64) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.c.clone(); xs.len()])
    }
}
