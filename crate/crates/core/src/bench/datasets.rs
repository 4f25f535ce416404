//! Benchmark dataset generators.

use crate::error::{CoreError, Result};
use crate::potentials::{CenterSource, ChiralCenter, Handedness};
use crate::rng;
use crate::samplers::{CornerGaussians, GaussianSampler, IndependentPair, PointSampler, UniformCube};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Pairs `Uniform[-1, 1]^d` with the corner-Gaussian mixture on `[-2, 2]^d`.
pub fn gen_hypercube_pair_sampler(d: usize, corner_std: f64) -> Result<IndependentPair> {
    if d == 0 {
        return Err(CoreError::InvalidConfig("d must be >= 1".into()));
    }
    if corner_std <= 0.0 {
        return Err(CoreError::InvalidConfig("corner_std must be > 0".into()));
    }
    Ok(IndependentPair::new(
        Box::new(UniformCube {
            dim: d,
            half_width: 1.0,
        }),
        Box::new(CornerGaussians { dim: d, corner_std }),
    ))
}

pub const DATASET_2D_NAMES: [&str; 5] =
    ["circle", "s_curve", "eight_gaussians", "moons", "uniform_square"];

/// Draw `n` points from one of the named synthetic 2D densities.
pub fn gen_2d_dataset(name: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(CoreError::InvalidConfig("n must be >= 1".into()));
    }
    let sampler = Dataset2d::new(name)?;
    Ok(sampler.sample(n, rng))
}

/// Named 2D density usable as a training sampler.
pub struct Dataset2d {
    name: String,
}

impl Dataset2d {
    pub fn new(name: &str) -> Result<Self> {
        if !DATASET_2D_NAMES.contains(&name) {
            return Err(CoreError::UnknownDataset(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = |rng: &mut ChaCha8Rng| -> f64 {
            0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal)
        };
        match self.name.as_str() {
            "circle" => {
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = 1.0 + noise(rng);
                vec![r * phi.cos(), r * phi.sin()]
            }
            "s_curve" => {
                // (sin u, sign(u)(cos u - 1)) on [-pi, pi]; x doubled so the
                // curve spans [-2, 2]^2
                let u = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let x = 2.0 * u.sin();
                let y = u.signum() * (u.cos() - 1.0);
                vec![x + noise(rng), y + noise(rng)]
            }
            "eight_gaussians" => {
                let k = rng.gen_range(0..8usize);
                let angle = k as f64 * std::f64::consts::FRAC_PI_4;
                let e = rng::standard_normal(rng, 2);
                vec![
                    2.0 * angle.cos() + 0.1 * e[0],
                    2.0 * angle.sin() + 0.1 * e[1],
                ]
            }
            "moons" => {
                let phi = rng.gen_range(0.0..std::f64::consts::PI);
                let (x, y) = if rng.gen_bool(0.5) {
                    (phi.cos(), phi.sin())
                } else {
                    (1.0 - phi.cos(), 1.0 - phi.sin() - 0.5)
                };
                vec![x + noise(rng), y + noise(rng)]
            }
            "uniform_square" => {
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]
            }
            _ => unreachable!("validated in new()"),
        }
    }
}

impl PointSampler for Dataset2d {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Number of atoms in the toy stereocenter (one center, four neighbors).
pub const CHIRAL_TOY_ATOMS: usize = 5;
pub const CHIRAL_TOY_DIM: usize = 3 * CHIRAL_TOY_ATOMS;
const CHIRAL_TOY_EDGE: f64 = 1.5;
const CHIRAL_TOY_JITTER: f64 = 0.05;

/// The stereocenter declaration the toy benchmark steers toward: neighbors
/// are atoms 1..4 in priority order, desired handedness R.
pub fn chiral_toy_center() -> ChiralCenter {
    ChiralCenter {
        id: 0,
        neighbors: [1, 2, 3, 4],
        handedness: Handedness::R,
        source: CenterSource::Reactant,
    }
}

/// Target geometry sampler in `R^15`: a center atom at the origin plus four
/// neighbors on a randomly rotated, jittered regular tetrahedron of edge
/// 1.5. Handedness is a fair coin; the mirrored arrangement flips the signed
/// volume.
pub struct ChiralToySampler;

impl ChiralToySampler {
    fn base_vertices() -> [[f64; 3]; 4] {
        // regular tetrahedron with edge CHIRAL_TOY_EDGE; this ordering has a
        // negative signed volume, i.e. it realizes the R configuration
        let a = CHIRAL_TOY_EDGE / (2.0 * 2.0f64.sqrt());
        [
            [a, a, a],
            [a, -a, -a],
            [-a, a, -a],
            [-a, -a, a],
        ]
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let q = rng::standard_normal(rng, 4);
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

impl PointSampler for ChiralToySampler {
    fn dim(&self) -> usize {
        CHIRAL_TOY_DIM
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mirror = rng.gen_bool(0.5);
                let rot = random_rotation(rng);
                let mut flat = vec![0.0; CHIRAL_TOY_DIM];
                for (vi, vertex) in Self::base_vertices().iter().enumerate() {
                    let mut p = *vertex;
                    if mirror {
                        p[2] = -p[2];
                    }
                    let mut rp = [0.0; 3];
                    for i in 0..3 {
                        rp[i] = rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2]
                            + CHIRAL_TOY_JITTER
                                * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    }
                    let base = 3 * (vi + 1);
                    flat[base..base + 3].copy_from_slice(&rp);
                }
                flat
            })
            .collect()
    }
}

/// Pairs `N(0, I_15)` with the toy stereocenter geometries.
pub fn gen_chiral_toy_sampler() -> IndependentPair {
    IndependentPair::new(
        Box::new(GaussianSampler::standard(CHIRAL_TOY_DIM)),
        Box::new(ChiralToySampler),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{normalized_chiral_volume, Geometry};
    use crate::rng::{stream, tag};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi2_p_value(statistic: f64, dof: f64) -> f64 {
        1.0 - ChiSquared::new(dof).unwrap().cdf(statistic)
    }

    #[test]
    fn hypercube_corner_frequencies_uniform() {
        let pair = gen_hypercube_pair_sampler(3, 0.2).unwrap();
        let mut rng = stream(1, &[tag::DATA]);
        let n = 100_000;
        let (x0s, x1s) = {
            use crate::train::PairSampler;
            pair.sample_pairs(n, &mut rng)
        };
        assert!(x0s.iter().flatten().all(|&v| (-1.0..=1.0).contains(&v)));

        let mut counts = [0usize; 8];
        for x in &x1s {
            let mut idx = 0;
            for (j, &c) in x.iter().enumerate() {
                if c > 0.0 {
                    idx |= 1 << j;
                }
            }
            counts[idx] += 1;
        }
        let expected = n as f64 / 8.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let p = chi2_p_value(stat, 7.0);
        assert!(p > 0.001, "corner chi2 p = {p}");

        for j in 0..3 {
            let mean = x1s.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.05, "x1 mean[{j}] = {mean}");
        }
    }

    #[test]
    fn circle_radii_concentrate() {
        let mut rng = stream(2, &[tag::DATA]);
        let pts = gen_2d_dataset("circle", 10_000, &mut rng).unwrap();
        let mean_r = pts
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean_r - 1.0).abs() < 0.02, "mean radius {mean_r}");
    }

    #[test]
    fn eight_gaussians_centroid_origin() {
        let mut rng = stream(3, &[tag::DATA]);
        let pts = gen_2d_dataset("eight_gaussians", 20_000, &mut rng).unwrap();
        for j in 0..2 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / 20_000.0;
            assert!(mean.abs() < 0.05, "centroid[{j}] {mean}");
        }
    }

    fn ks_p_value(d: f64, n: usize) -> f64 {
        // asymptotic Kolmogorov distribution
        let x = d * ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt());
        let mut p = 0.0;
        for j in 1..=100 {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            p += sign * (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        }
        (2.0 * p).clamp(0.0, 1.0)
    }

    #[test]
    fn uniform_square_ks_flat() {
        let mut rng = stream(4, &[tag::DATA]);
        let n = 10_000;
        let pts = gen_2d_dataset("uniform_square", n, &mut rng).unwrap();
        for j in 0..2 {
            let mut vals: Vec<f64> = pts.iter().map(|p| (p[j] + 2.0) / 4.0).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut d: f64 = 0.0;
            for (i, v) in vals.iter().enumerate() {
                let hi = (i + 1) as f64 / n as f64 - v;
                let lo = v - i as f64 / n as f64;
                d = d.max(hi.max(lo));
            }
            let p = ks_p_value(d, n);
            assert!(p > 0.001, "KS p = {p} on coordinate {j}");
        }
    }

    #[test]
    fn moons_and_s_curve_in_range() {
        let mut rng = stream(5, &[tag::DATA]);
        for name in ["moons", "s_curve"] {
            let pts = gen_2d_dataset(name, 5000, &mut rng).unwrap();
            assert!(pts
                .iter()
                .flatten()
                .all(|&v| (-2.5..=2.5).contains(&v)), "{name} out of range");
        }
    }

    #[test]
    fn unknown_dataset_rejected() {
        let mut rng = stream(6, &[tag::DATA]);
        assert!(matches!(
            gen_2d_dataset("swirl", 10, &mut rng),
            Err(CoreError::UnknownDataset(_))
        ));
    }

    #[test]
    fn chiral_toy_geometry_statistics() {
        let sampler = ChiralToySampler;
        let mut rng = stream(7, &[tag::DATA]);
        let n = 20_000;
        let samples = sampler.sample(n, &mut rng);
        let center = chiral_toy_center();

        let mut strong = 0usize;
        let mut negative = 0usize;
        for flat in &samples {
            let g = Geometry::from_flat(flat).unwrap();
            let v = normalized_chiral_volume(
                &g.positions[center.neighbors[0]],
                &g.positions[center.neighbors[1]],
                &g.positions[center.neighbors[2]],
                &g.positions[center.neighbors[3]],
            )
            .unwrap();
            if v.abs() >= 0.5 {
                strong += 1;
            }
            if v < 0.0 {
                negative += 1;
            }

            // center of mass stays within the jitter scale
            let mut com = [0.0; 3];
            for p in &g.positions {
                for i in 0..3 {
                    com[i] += p[i] / 5.0;
                }
            }
            assert!(com.iter().all(|c| c.abs() < 0.2), "com {com:?}");
        }
        assert!(
            strong as f64 / n as f64 >= 0.99,
            "only {strong}/{n} have |normalized volume| >= 0.5"
        );

        // handedness frequencies are a fair coin
        let stat = {
            let e = n as f64 / 2.0;
            let d0 = negative as f64 - e;
            let d1 = (n - negative) as f64 - e;
            d0 * d0 / e + d1 * d1 / e
        };
        let p = chi2_p_value(stat, 1.0);
        assert!(p > 0.001, "handedness chi2 p = {p}");
    }
}
