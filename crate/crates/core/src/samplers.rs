//! Point samplers for priors, targets, and empirical datasets.

use crate::error::{CoreError, Result};
use crate::rng;
use crate::train::PairSampler;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A batch sampler over points in `R^d`.
pub trait PointSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>>;
}

/// Isotropic Gaussian `N(mean, std^2 I)`.
pub struct GaussianSampler {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl GaussianSampler {
    pub fn new(mean: Vec<f64>, std: f64) -> Self {
        Self { mean, std }
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: 1.0,
        }
    }
}

impl PointSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let eps = rng::standard_normal(rng, self.mean.len());
                self.mean
                    .iter()
                    .zip(eps)
                    .map(|(m, e)| m + self.std * e)
                    .collect()
            })
            .collect()
    }
}

/// Even mixture of isotropic 1D Gaussians.
pub struct GaussianMixture1d {
    pub centers: Vec<f64>,
    pub std: f64,
}

impl PointSampler for GaussianMixture1d {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let c = self.centers[rng.gen_range(0..self.centers.len())];
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                vec![c + self.std * e]
            })
            .collect()
    }
}

/// Uniform over the cube `[-half_width, half_width]^d`.
pub struct UniformCube {
    pub dim: usize,
    pub half_width: f64,
}

impl PointSampler for UniformCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..self.dim)
                    .map(|_| rng.gen_range(-self.half_width..self.half_width))
                    .collect()
            })
            .collect()
    }
}

/// Mixture of `2^d` isotropic Gaussians centered on the corners of
/// `[-2, 2]^d`, corners equally likely (independent coordinate signs).
pub struct CornerGaussians {
    pub dim: usize,
    pub corner_std: f64,
}

impl PointSampler for CornerGaussians {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..self.dim)
                    .map(|_| {
                        let corner = if rng.gen_bool(0.5) { 2.0 } else { -2.0 };
                        let e: f64 = rng.sample(rand_distr::StandardNormal);
                        corner + self.corner_std * e
                    })
                    .collect()
            })
            .collect()
    }
}

/// The single corner Gaussian at `(2, ..., 2)`, the reference target for the
/// steered hypercube runs.
pub struct SingleCorner {
    pub dim: usize,
    pub corner_std: f64,
}

impl PointSampler for SingleCorner {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..self.dim)
                    .map(|_| {
                        let e: f64 = rng.sample(rand_distr::StandardNormal);
                        2.0 + self.corner_std * e
                    })
                    .collect()
            })
            .collect()
    }
}

/// Draws from a fixed point set with replacement.
pub struct EmpiricalSampler {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl EmpiricalSampler {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or(CoreError::EmptyBatch)?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(CoreError::DimensionMismatch {
                expected: dim,
                got: points.iter().map(|p| p.len()).find(|&l| l != dim).unwrap(),
            });
        }
        Ok(Self { points, dim })
    }
}

impl PointSampler for EmpiricalSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| self.points[rng.gen_range(0..self.points.len())].clone())
            .collect()
    }
}

/// Independent coupling of a source and a target sampler.
pub struct IndependentPair {
    pub p0: Box<dyn PointSampler>,
    pub p1: Box<dyn PointSampler>,
}

impl IndependentPair {
    pub fn new(p0: Box<dyn PointSampler>, p1: Box<dyn PointSampler>) -> Self {
        assert_eq!(p0.dim(), p1.dim(), "source/target dimension mismatch");
        Self { p0, p1 }
    }
}

impl PairSampler for IndependentPair {
    fn dim(&self) -> usize {
        self.p0.dim()
    }

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (self.p0.sample(n, rng), self.p1.sample(n, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};

    #[test]
    fn gaussian_moments() {
        let g = GaussianSampler::new(vec![1.0, -1.0], 0.5);
        let mut rng = stream(1, &[tag::DATA]);
        let xs = g.sample(20000, &mut rng);
        let mean0 = xs.iter().map(|x| x[0]).sum::<f64>() / 20000.0;
        assert!((mean0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn corner_means_cancel() {
        let c = CornerGaussians {
            dim: 3,
            corner_std: 0.2,
        };
        let mut rng = stream(2, &[tag::DATA]);
        let xs = c.sample(40000, &mut rng);
        for j in 0..3 {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / 40000.0;
            assert!(mean.abs() < 0.05, "coordinate {j} mean {mean}");
        }
    }

    #[test]
    fn empirical_needs_points() {
        assert!(EmpiricalSampler::new(vec![]).is_err());
    }
}
