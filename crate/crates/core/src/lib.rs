//! Adversarial data synthesis against a closed-form neural-tangent-kernel
//! discriminator.
//!
//! The discriminator is the mean prediction of an infinitely wide, fully
//! connected ReLU network trained on real rows (label 1) stacked over
//! generated rows (label 0). Its trained state has a closed form,
//! `D = (I - exp(-lambda K)) y`, so the generated rows can be optimized
//! directly by gradient descent on `0.5 * ||1 - D||^2` with no inner
//! max problem.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`ntk`] | NNGP / NTK layer recursion and Gram matrices |
//! | [`matfun`] | symmetric eigendecomposition, `exp(-lambda K)` and its adjoint |
//! | [`discriminator`] | closed-form predictions and the lambda search |
//! | [`gradient`] | analytic loss gradient and a finite-difference oracle |
//! | [`synthesis`] | full, batch-wise, generator and multi-resolution loops |
//! | [`data`] | Gaussian-mixture toys, MNIST IDX files, row normalization |
//! | [`metrics`] | SSIM / AM-SSIM, 2D Wasserstein, mode coverage |

pub mod data;
pub mod discriminator;
mod error;
pub mod gradient;
pub mod matfun;
pub mod metrics;
pub mod ntk;
pub mod synthesis;

pub use error::{Error, Result};

pub use data::{Dataset, DataSource, GmmSpec};
pub use discriminator::{LabeledStack, LambdaParam, LambdaSearch};
pub use gradient::GradReport;
pub use matfun::SymEig;
pub use ntk::{Activation, CovTriple, KernelMatrix, NtkConfig};
pub use synthesis::{GdOptions, GeneratorMlp, Init, Optimizer, ResolutionLevel, SynthState};

/// Row-major view helpers over `nalgebra` matrices whose rows are points.
pub(crate) mod rows {
    use nalgebra::DMatrix;

    /// Copies the rows of `m` into one contiguous row-major buffer.
    pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
        let (r, c) = m.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(m[(i, j)]);
            }
        }
        out
    }

    pub fn all_finite(m: &DMatrix<f64>) -> bool {
        m.iter().all(|v| v.is_finite())
    }

    /// Vertical stack `top ⊕ bottom`.
    pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
        let d = top.ncols();
        let (n1, n2) = (top.nrows(), bottom.nrows());
        DMatrix::from_fn(n1 + n2, d, |i, j| if i < n1 { top[(i, j)] } else { bottom[(i - n1, j)] })
    }

    pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
    }
}
