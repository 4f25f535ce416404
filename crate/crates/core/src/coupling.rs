//! Minibatch optimal-transport coupling via exact linear assignment.
//!
//! Batches are paired by the permutation minimizing the total squared
//! Euclidean cost, solved exactly with the O(n^3) potential-based Hungarian
//! method. Exactness is what defines the coupling, so the size is capped
//! rather than falling back to an approximation.

use crate::error::{CoreError, Result};

/// Largest batch the exact solver accepts.
pub const OT_PAIRING_CAP: usize = 512;

/// Permutation `pi` minimizing `sum_i ||batch0[i] - batch1[pi(i)]||^2`.
pub fn minibatch_ot_pairing(batch0: &[Vec<f64>], batch1: &[Vec<f64>]) -> Result<Vec<usize>> {
    minibatch_ot_pairing_with_cap(batch0, batch1, OT_PAIRING_CAP)
}

pub fn minibatch_ot_pairing_with_cap(
    batch0: &[Vec<f64>],
    batch1: &[Vec<f64>],
    cap: usize,
) -> Result<Vec<usize>> {
    let n = batch0.len();
    if n != batch1.len() {
        return Err(CoreError::UnequalBatchSizes(n, batch1.len()));
    }
    if n == 0 {
        return Err(CoreError::EmptyBatch);
    }
    if n > cap {
        return Err(CoreError::AssignmentTooLarge { n, cap });
    }
    let d = batch0[0].len();
    for x in batch0.iter().chain(batch1.iter()) {
        if x.len() != d {
            return Err(CoreError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }

    let cost = |i: usize, j: usize| -> f64 {
        batch0[i]
            .iter()
            .zip(&batch1[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    Ok(hungarian(n, cost))
}

/// Potential-based Hungarian algorithm for a square min-cost assignment.
/// Returns `assign` with `assign[row] = column`.
fn hungarian(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    const INF: f64 = f64::INFINITY;
    // 1-based internally; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};
    use rand::Rng;

    fn pairing_cost(b0: &[Vec<f64>], b1: &[Vec<f64>], perm: &[usize]) -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| {
                b0[i]
                    .iter()
                    .zip(&b1[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q: Vec<usize> = p.iter().map(|&x| x).collect();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force(b0: &[Vec<f64>], b1: &[Vec<f64>]) -> f64 {
        permutations(b0.len())
            .into_iter()
            .map(|p| pairing_cost(b0, b1, &p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn crossing_pair() {
        // cost 2 for the swap vs 162 for identity
        let b0 = vec![vec![0.0], vec![10.0]];
        let b1 = vec![vec![9.0], vec![1.0]];
        assert_eq!(minibatch_ot_pairing(&b0, &b1).unwrap(), vec![1, 0]);
    }

    #[test]
    fn identity_on_identical_batches() {
        let b: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -(i as f64)]).collect();
        assert_eq!(minibatch_ot_pairing(&b, &b).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn singleton() {
        assert_eq!(
            minibatch_ot_pairing(&[vec![2.0]], &[vec![-3.0]]).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(minibatch_ot_pairing(&[vec![0.0]], &[]).is_err());
        let b = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            minibatch_ot_pairing_with_cap(&b, &b, 2),
            Err(CoreError::AssignmentTooLarge { n: 3, cap: 2 })
        ));
    }

    // For n <= 6 the assignment cost must equal the brute-force minimum over
    // all n! permutations.
    #[test]
    fn optimal_against_brute_force() {
        let mut rng = stream(21, &[tag::DATA]);
        for n in 1..=6 {
            for _ in 0..20 {
                let b0: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect();
                let b1: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect();
                let perm = minibatch_ot_pairing(&b0, &b1).unwrap();
                let mut seen = perm.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>(), "not a permutation");
                let got = pairing_cost(&b0, &b1, &perm);
                let best = brute_force(&b0, &b1);
                assert!(
                    (got - best).abs() <= 1e-9 * (1.0 + best),
                    "n={n}: {got} vs brute force {best}"
                );
            }
        }
    }
}
