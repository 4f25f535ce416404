//! Distribution metrics for the benchmark suites.

use crate::error::{CoreError, Result};
use crate::rng::{self, tag};

/// Number of random projections matching the reported evaluation setup.
pub const DEFAULT_PROJECTIONS: usize = 4096;

/// Sliced 2-Wasserstein distance: the square root of the mean, over random
/// unit directions, of the squared 1D W2 between the projected empirical
/// distributions. Equal sizes pair sorted projections directly; unequal
/// sizes are compared at `max(m, n)` interpolated quantile levels.
pub fn sliced_w2(a: &[Vec<f64>], b: &[Vec<f64>], n_proj: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if n_proj == 0 {
        return Err(CoreError::InvalidConfig("n_proj must be >= 1".into()));
    }
    let d = a[0].len();
    for p in a.iter().chain(b.iter()) {
        if p.len() != d {
            return Err(CoreError::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }

    let mut rng = rng::stream(seed, &[tag::PROJECTION]);
    let mut acc = 0.0;
    let mut pa = vec![0.0; a.len()];
    let mut pb = vec![0.0; b.len()];
    for _ in 0..n_proj {
        let dir = random_unit(&mut rng, d);
        project_into(a, &dir, &mut pa);
        project_into(b, &dir, &mut pb);
        pa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        acc += w2_squared_sorted(&pa, &pb);
    }
    Ok((acc / n_proj as f64).sqrt())
}

fn random_unit(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = rng::standard_normal(rng, d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn project_into(points: &[Vec<f64>], dir: &[f64], out: &mut [f64]) {
    for (o, p) in out.iter_mut().zip(points) {
        *o = p.iter().zip(dir).map(|(x, u)| x * u).sum();
    }
}

/// Squared 1D W2 between sorted samples.
fn w2_squared_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        let n = a.len() as f64;
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
    } else {
        let levels = a.len().max(b.len());
        let mut acc = 0.0;
        for i in 0..levels {
            let q = (i as f64 + 0.5) / levels as f64;
            let qa = quantile_sorted(a, q);
            let qb = quantile_sorted(b, q);
            acc += (qa - qb) * (qa - qb);
        }
        acc / levels as f64
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Fraction of samples with all coordinates `>= 0`.
pub fn success_rate(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    let hits = samples
        .iter()
        .filter(|x| x.iter().all(|&c| c >= 0.0))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Median and quartiles of a sample.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| quantile_sorted(&v, p);
    (q(0.25), q(0.5), q(0.75))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn zero_on_identical_multisets() {
        let a = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]];
        let d = sliced_w2(&a, &a, 64, 1).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn point_masses_1d() {
        let a = vec![vec![0.0]];
        let b = vec![vec![3.0]];
        let d = sliced_w2(&a, &b, 32, 2).unwrap();
        assert!((d - 3.0).abs() < 1e-12, "{d}");
    }

    // Mean-shifted standard normals in 2D: the analytic sliced W2 for a unit
    // mean shift is sqrt(E<u, e1>^2) = 1/sqrt(2).
    #[test]
    fn gaussian_mean_shift_oracle() {
        let mut rng = stream(3, &[tag::DATA]);
        let n = 10000;
        let a: Vec<Vec<f64>> = (0..n).map(|_| rng::standard_normal(&mut rng, 2)).collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let e = rng::standard_normal(&mut rng, 2);
                vec![1.0 + e[0], e[1]]
            })
            .collect();
        let d = sliced_w2(&a, &b, 1024, 7).unwrap();
        let expect = 1.0 / 2.0f64.sqrt();
        assert!(
            (d - expect).abs() < 0.1 * expect,
            "sliced W2 {d} vs analytic {expect}"
        );
    }

    #[test]
    fn symmetric_and_unequal_sizes() {
        let mut rng = stream(4, &[tag::DATA]);
        let a: Vec<Vec<f64>> = (0..50).map(|_| rng::standard_normal(&mut rng, 3)).collect();
        let b: Vec<Vec<f64>> = (0..80)
            .map(|_| {
                rng::standard_normal(&mut rng, 3)
                    .into_iter()
                    .map(|v| v + 0.5)
                    .collect()
            })
            .collect();
        let ab = sliced_w2(&a, &b, 256, 9).unwrap();
        let ba = sliced_w2(&b, &a, 256, 9).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = stream(5, &[tag::DATA]);
        let a: Vec<Vec<f64>> = (0..200).map(|_| rng::standard_normal(&mut rng, 2)).collect();
        let b: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let e = rng::standard_normal(&mut rng, 2);
                vec![e[0] * 2.0, e[1]]
            })
            .collect();
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let rot = |p: &Vec<f64>| {
            vec![
                p[0] * theta.cos() - p[1] * theta.sin(),
                p[0] * theta.sin() + p[1] * theta.cos(),
            ]
        };
        let ar: Vec<Vec<f64>> = a.iter().map(rot).collect();
        let br: Vec<Vec<f64>> = b.iter().map(rot).collect();
        let before = sliced_w2(&a, &b, 2048, 11).unwrap();
        let after = sliced_w2(&ar, &br, 2048, 11).unwrap();
        assert!(
            (before - after).abs() < 0.05 * before.max(0.1),
            "{before} vs {after}"
        );
    }

    #[test]
    fn success_rate_values() {
        assert_eq!(success_rate(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap(), 1.0);
        assert_eq!(success_rate(&[vec![-1.0, 2.0]]).unwrap(), 0.0);
        assert!(success_rate(&[]).is_err());
    }

    // Orthant probability of a symmetric Gaussian in 2D is 1/4.
    #[test]
    fn success_rate_gaussian_orthant() {
        let mut rng = stream(6, &[tag::DATA]);
        let xs: Vec<Vec<f64>> = (0..10000)
            .map(|_| rng::standard_normal(&mut rng, 2))
            .collect();
        let rate = success_rate(&xs).unwrap();
        assert!((rate - 0.25).abs() < 0.02, "{rate}");
    }
}
