//! Squared-Euclidean optimal transport between two equal-size clouds with
//! uniform weights. The value returned is the transport cost
//! `(1/m) * sum_i ||a_i - b_sigma(i)||^2`, i.e. the squared 2-Wasserstein
//! distance.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Clouds up to this size are matched exactly.
pub const EXACT_MAX_POINTS: usize = 512;
pub const SINKHORN_REG: f64 = 1e-2;
pub const SINKHORN_ITERS: usize = 1000;

fn check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if a.ncols() != 2 || b.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: if a.ncols() != 2 { a.ncols() } else { b.ncols() },
        });
    }
    if a.nrows() == 0 {
        return Err(Error::Empty("point cloud"));
    }
    Ok(())
}

fn cost_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (a[(i, 0)] - b[(j, 0)]).powi(2) + (a[(i, 1)] - b[(j, 1)]).powi(2)
    })
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, `O(m^3)`). Returns `assign[row] = column`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[col_owner[j] - 1] = j - 1;
    }
    assign
}

/// Exact optimal transport cost via assignment.
pub fn wasserstein_2d_exact(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check(a, b)?;
    let c = cost_matrix(a, b);
    let assign = min_cost_assignment(&c);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
    Ok(total / a.nrows() as f64)
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic transport cost `<P, C>` from log-domain Sinkhorn iterations.
pub fn wasserstein_2d_sinkhorn(a: &DMatrix<f64>, b: &DMatrix<f64>, reg: f64, iters: usize) -> Result<f64> {
    check(a, b)?;
    if !(reg.is_finite() && reg > 0.0) {
        return Err(Error::InvalidConfig(format!("Sinkhorn regularization must be > 0, got {reg}")));
    }
    let m = a.nrows();
    let c = cost_matrix(a, b);
    let log_w = -(m as f64).ln();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; m];
    for _ in 0..iters {
        for i in 0..m {
            f[i] = reg * log_w - reg * log_sum_exp((0..m).map(|j| (g[j] - c[(i, j)]) / reg));
        }
        for j in 0..m {
            g[j] = reg * log_w - reg * log_sum_exp((0..m).map(|i| (f[i] - c[(i, j)]) / reg));
        }
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            total += ((f[i] + g[j] - c[(i, j)]) / reg).exp() * c[(i, j)];
        }
    }
    Ok(total)
}

/// Exact for clouds of at most [`EXACT_MAX_POINTS`] points, Sinkhorn above.
pub fn wasserstein_2d(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() <= EXACT_MAX_POINTS {
        wasserstein_2d_exact(a, b)
    } else {
        wasserstein_2d_sinkhorn(a, b, SINKHORN_REG, SINKHORN_ITERS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, m: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, 2, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identical_and_shifted() {
        let a = cloud(1, 20);
        assert_eq!(wasserstein_2d(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.column_mut(0).add_scalar_mut(1.0);
        assert!((wasserstein_2d(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_gives_zero_and_symmetry() {
        let a = cloud(2, 15);
        let perm: Vec<usize> = (0..15).rev().collect();
        let b = crate::rows::select_rows(&a, &perm);
        assert_eq!(wasserstein_2d(&a, &b).unwrap(), 0.0);
        let c = cloud(3, 15);
        let (ac, ca) = (wasserstein_2d(&a, &c).unwrap(), wasserstein_2d(&c, &a).unwrap());
        assert!((ac - ca).abs() < 1e-12);
    }

    #[test]
    fn assignment_is_a_permutation() {
        let c = cost_matrix(&cloud(4, 30), &cloud(5, 30));
        let mut a = min_cost_assignment(&c);
        a.sort();
        assert_eq!(a, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(wasserstein_2d(&cloud(1, 3), &cloud(2, 4)).is_err());
        assert!(wasserstein_2d_sinkhorn(&cloud(1, 3), &cloud(2, 3), 0.0, 10).is_err());
    }
}
