//! Spectral matrix functions of a symmetric kernel matrix: `exp(-lambda K)`
//! and its reverse-mode derivative.
//!
//! One eigendecomposition `K = Q diag(mu) Q^T` serves the forward value, the
//! adjoint, and any limit diagnostics. The decomposition itself is delegated
//! to `faer`; everything built on top of it lives here.

use nalgebra::{DMatrix, DVector};

use crate::ntk::KernelMatrix;
use crate::{Error, Result};

/// Relative gap below which two eigenvalues are treated as equal when
/// forming divided differences.
const DEGENERATE_GAP: f64 = 1e-10;

/// `K = Q diag(eigvals) Q^T` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    pub fn min_eigval(&self) -> f64 {
        self.eigvals[0]
    }

    /// `Q diag(values) Q^T`.
    pub fn reconstruct_with(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.eigvecs.clone();
        for (j, v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*v);
        }
        scaled * self.eigvecs.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.eigvals)
    }
}

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn sym_eig(k: &KernelMatrix) -> Result<SymEig> {
    sym_eig_matrix(&k.entries)
}

pub(crate) fn sym_eig_matrix(k: &DMatrix<f64>) -> Result<SymEig> {
    let m = k.nrows();
    if k.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: k.ncols(),
        });
    }
    if m == 0 {
        return Err(Error::Empty("matrix"));
    }
    if !crate::rows::all_finite(k) {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let f = faer::Mat::<f64>::from_fn(m, m, |i, j| k[(i, j)]);
    let evd = f.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| s.read(a).total_cmp(&s.read(b)));
    let eigvals = DVector::from_fn(m, |i, _| s.read(order[i]));
    let eigvecs = DMatrix::from_fn(m, m, |i, j| u.read(i, order[j]));
    Ok(SymEig { eigvals, eigvecs })
}

/// `exp(-lambda K) = Q diag(exp(-lambda mu)) Q^T`.
pub fn expm_neg(eig: &SymEig, lambda: f64) -> DMatrix<f64> {
    let vals = eig.eigvals.map(|mu| (-lambda * mu).exp());
    let mut out = eig.reconstruct_with(&vals);
    symmetrize(&mut out);
    out
}

/// `exp(-lambda K) v` without forming the matrix.
pub(crate) fn expm_neg_apply(eig: &SymEig, lambda: f64, v: &DVector<f64>) -> DVector<f64> {
    let mut coeffs = eig.eigvecs.tr_mul(v);
    for (c, mu) in coeffs.iter_mut().zip(eig.eigvals.iter()) {
        *c *= (-lambda * mu).exp();
    }
    &eig.eigvecs * coeffs
}

/// First divided differences of `f(s) = exp(-lambda s)` on the spectrum,
/// with the derivative `-lambda exp(-lambda mu_i)` on (near-)coincident
/// eigenvalues.
pub(crate) fn divided_differences(eig: &SymEig, lambda: f64) -> DMatrix<f64> {
    let mu = &eig.eigvals;
    let m = mu.len();
    let mut f = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let (lo, hi) = if mu[i] <= mu[j] { (mu[i], mu[j]) } else { (mu[j], mu[i]) };
            let gap = hi - lo;
            let v = if gap < DEGENERATE_GAP * (1.0 + mu[i].abs()) {
                -lambda * (-lambda * mu[i]).exp()
            } else {
                // (f(lo) - f(hi)) / (lo - hi), written to avoid cancellation
                (-lambda * lo).exp() * (-lambda * gap).exp_m1() / gap
            };
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    f
}

/// Gradient of `<upstream, exp(-lambda K)>` with respect to `K`, symmetrized.
///
/// Daleckii-Krein: `Q ((Q^T G Q) .* F) Q^T` with `F` the divided differences
/// of `exp(-lambda s)` over the eigenvalues.
pub fn expm_neg_adjoint(eig: &SymEig, lambda: f64, upstream: &DMatrix<f64>) -> DMatrix<f64> {
    let q = &eig.eigvecs;
    let inner = q.transpose() * upstream * q;
    let f = divided_differences(eig, lambda);
    let mut out = q * inner.component_mul(&f) * q.transpose();
    symmetrize(&mut out);
    out
}

/// Adjoint for a rank-one upstream `u v^T`, returning only the rows in
/// `rows` of the (symmetric) result. Costs `O(|rows| m^2)` after the
/// decomposition instead of `O(m^3)`.
pub(crate) fn expm_neg_adjoint_rank_one_rows(
    eig: &SymEig,
    lambda: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
    rows: std::ops::Range<usize>,
) -> DMatrix<f64> {
    let q = &eig.eigvecs;
    let qu = q.tr_mul(u);
    let qv = q.tr_mul(v);
    let f = divided_differences(eig, lambda);
    let m = eig.dim();
    // sym(qu qv^T) .* F
    let w = DMatrix::from_fn(m, m, |i, j| 0.5 * (qu[i] * qv[j] + qu[j] * qv[i]) * f[(i, j)]);
    let q_rows = q.rows(rows.start, rows.len());
    (q_rows * w) * q.transpose()
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let m = a.nrows();
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
