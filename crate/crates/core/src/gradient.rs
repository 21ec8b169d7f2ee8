//! Loss and analytic gradient of the synthesis objective
//! `L(Z) = 0.5 * ||1 - D(X, Z)||^2` with respect to the generated rows.
//!
//! The backward pass runs in three stages:
//!
//! 1. `dL/dD = D - 1 =: r`, so the upstream on `E = exp(-lambda K)` is the
//!    rank-one matrix `-r y^T`.
//! 2. Daleckii-Krein turns that into a symmetric `G = dL/dK`; only the rows
//!    of `G` belonging to generated points are formed.
//! 3. Each kernel entry is pulled back through the layer recursion. Every
//!    block of `K` that touches a generated row contributes: real/fake
//!    entries, fake/fake entries, and the diagonal `k(z, z)`.
//!
//! Real rows are constants, so no gradient is ever formed for them.

use nalgebra::{DMatrix, DVector};

use crate::matfun;
use crate::ntk::{self, NtkConfig};
use crate::rows;
use crate::{Error, Result};

/// Loss and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    /// `dL/dZ`, same shape as `Z`.
    pub grad: DMatrix<f64>,
    pub loss: f64,
    /// Frobenius norm of `grad`.
    pub grad_norm: f64,
}

fn check_inputs(real: &DMatrix<f64>, fake: &DMatrix<f64>, cfg: &NtkConfig) -> Result<()> {
    cfg.validate()?;
    if real.ncols() != fake.ncols() {
        return Err(Error::DimensionMismatch {
            expected: real.ncols(),
            got: fake.ncols(),
        });
    }
    if real.ncols() == 0 {
        return Err(Error::Empty("row width"));
    }
    if real.nrows() + fake.nrows() < 2 {
        return Err(Error::TooFewRows {
            min: 2,
            got: real.nrows() + fake.nrows(),
        });
    }
    if !rows::all_finite(real) || !rows::all_finite(fake) {
        return Err(Error::NonFinite("loss inputs"));
    }
    Ok(())
}

fn labels(n_real: usize, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |i, _| if i < n_real { 1.0 } else { 0.0 })
}

/// Loss only. Accepts `lambda = 0`, where the discriminator is identically
/// zero and the loss is exactly `m / 2`.
pub fn loss_value(real: &DMatrix<f64>, fake: &DMatrix<f64>, cfg: &NtkConfig, lambda: f64) -> Result<f64> {
    check_inputs(real, fake, cfg)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let m = real.nrows() + fake.nrows();
    if lambda == 0.0 {
        return Ok(0.5 * m as f64);
    }
    let a = rows::vstack(real, fake);
    let buf = rows::to_row_major(&a);
    let k = ntk::gram_row_major(&buf, m, a.ncols(), cfg);
    let eig = matfun::sym_eig_matrix(&k)?;
    let y = labels(real.nrows(), m);
    // 1 - D = 1 - y + exp(-lambda K) y
    let resid = matfun::expm_neg_apply(&eig, lambda, &y) - &y + DVector::from_element(m, 1.0);
    Ok(0.5 * resid.norm_squared())
}

/// Loss and `dL/dZ` for real rows `real` and generated rows `fake`.
pub fn loss_and_grad(real: &DMatrix<f64>, fake: &DMatrix<f64>, cfg: &NtkConfig, lambda: f64) -> Result<GradReport> {
    check_inputs(real, fake, cfg)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let n_real = real.nrows();
    let n_fake = fake.nrows();
    let m = n_real + n_fake;
    let d = real.ncols();

    let stacked = rows::vstack(real, fake);
    let buf = rows::to_row_major(&stacked);
    let row = |i: usize| &buf[i * d..(i + 1) * d];

    let k = ntk::gram_row_major(&buf, m, d, cfg);
    let eig = matfun::sym_eig_matrix(&k)?;
    let y = labels(n_real, m);
    let d_pred = &y - matfun::expm_neg_apply(&eig, lambda, &y);
    let resid = d_pred.add_scalar(-1.0);
    let loss = 0.5 * resid.norm_squared();

    // rows n_real.. of dL/dK
    let g = matfun::expm_neg_adjoint_rank_one_rows(&eig, lambda, &(-&resid), &y, n_real..m);

    let mut grad = vec![0.0; n_fake * d];
    for p in 0..n_fake {
        let gp = n_real + p;
        let zp = row(gp);
        // k(z_p, z_p)
        let (_, coef) = ntk::diag_backward(zp, cfg);
        let w = g[(p, gp)] * coef;
        for (acc, v) in grad[p * d..(p + 1) * d].iter_mut().zip(zp) {
            *acc += w * v;
        }
        // real rows, and fake rows after p (each unordered fake pair once)
        for j in (0..n_real).chain(gp + 1..m) {
            let aj = row(j);
            let pg = ntk::pair_backward(zp, aj, cfg);
            // K_pj and K_jp both depend on the pair
            let w = 2.0 * g[(p, j)];
            let (cx, sx) = (w * pg.cross, w * pg.self_x);
            for t in 0..d {
                grad[p * d + t] += cx * aj[t] + sx * zp[t];
            }
            if j >= n_real {
                let q = j - n_real;
                let sy = w * pg.self_y;
                for t in 0..d {
                    grad[q * d + t] += cx * zp[t] + sy * aj[t];
                }
            }
        }
    }
    let grad = DMatrix::from_row_slice(n_fake, d, &grad);
    let grad_norm = grad.norm();
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(Error::NonFinite("loss or gradient"));
    }
    Ok(GradReport { grad, loss, grad_norm })
}

/// `dL/d(fake rows)` for callers that chain it further (generator training).
pub fn grad_wrt_fake_rows(
    real: &DMatrix<f64>,
    fake_rows: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    Ok(loss_and_grad(real, fake_rows, cfg, lambda)?.grad)
}

/// Central differences of a scalar function over every entry of `z`.
pub fn central_differences<F>(mut f: F, z: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DMatrix<f64>) -> Result<f64>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    let mut probe = z.clone();
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let orig = z[(i, j)];
            probe[(i, j)] = orig + step;
            let up = f(&probe)?;
            probe[(i, j)] = orig - step;
            let down = f(&probe)?;
            probe[(i, j)] = orig;
            out[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Finite-difference estimate of `dL/dZ`; test oracle for [`loss_and_grad`].
pub fn finite_diff_grad(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    central_differences(|z| loss_value(real, z, cfg, lambda), fake, step)
}
