//! Reference implementations used to cross-check `gantk` in tests.
//!
//! Nothing here depends on `gantk`. Each routine is written from the
//! defining formula with a different algorithm from the library: angular
//! arc-cosine forms instead of the `sqrt(ab - c^2)` form, Monte Carlo
//! instead of closed forms, Taylor series instead of eigendecompositions,
//! brute force instead of assignment solvers, and double-double arithmetic
//! where `f64` round-off would swamp a finite difference.

pub mod dd;
pub mod idx;
pub mod images;
pub mod kernel;
pub mod transport;

use nalgebra::DMatrix;

/// `exp(a)` evaluated in double-double arithmetic and rounded to `f64`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let dd: Vec<dd::Dd> = (0..n * n).map(|k| dd::Dd::from(a[(k / n, k % n)])).collect();
    let e = dd::expm(&dd, n);
    DMatrix::from_fn(n, n, |i, j| f64::from(e[i * n + j]))
}
