//! Closed-form NTK-GP discriminator.
//!
//! After training time `t` with learning rate `eta`, the mean prediction of
//! the infinite ensemble on its own training rows is
//! `D = (I - exp(-lambda K)) y` with `lambda = eta * t` and
//! `y = 1^n ⊕ 0^n` (real rows first).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matfun::{self, SymEig};
use crate::ntk::{self, NtkConfig};
use crate::rows;
use crate::{Error, Result};

/// Largest lambda the doubling search will try.
const MAX_LAMBDA: f64 = 1_152_921_504_606_846_976.0; // 2^60

/// Default separation tolerance for [`search_lambda`].
pub const DEFAULT_EPSILON: f64 = 1e-2;

/// Real rows stacked over generated rows, with labels `1^n ⊕ 0^n`.
#[derive(Debug, Clone)]
pub struct LabeledStack {
    pub rows: DMatrix<f64>,
    pub labels: DVector<f64>,
    n_real: usize,
}

impl LabeledStack {
    pub fn new(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<Self> {
        if real.ncols() != fake.ncols() {
            return Err(Error::DimensionMismatch {
                expected: real.ncols(),
                got: fake.ncols(),
            });
        }
        if !rows::all_finite(real) || !rows::all_finite(fake) {
            return Err(Error::NonFinite("stacked rows"));
        }
        let n_real = real.nrows();
        let m = n_real + fake.nrows();
        let stack = Self {
            rows: rows::vstack(real, fake),
            labels: DVector::from_fn(m, |i, _| if i < n_real { 1.0 } else { 0.0 }),
            n_real,
        };
        let dups = stack.duplicate_rows();
        if !dups.is_empty() {
            log::warn!(
                "{} duplicated row pair(s) in the labeled stack (first: {:?}); the kernel matrix is only positive definite for distinct rows",
                dups.len(),
                dups[0]
            );
        }
        Ok(stack)
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Index pairs `(i, j)`, `i < j`, of bit-identical rows.
    pub fn duplicate_rows(&self) -> Vec<(usize, usize)> {
        let buf = rows::to_row_major(&self.rows);
        let d = self.rows.ncols();
        let mut keyed: Vec<(Vec<u64>, usize)> = (0..self.len())
            .map(|i| (buf[i * d..(i + 1) * d].iter().map(|v| v.to_bits()).collect(), i))
            .collect();
        keyed.sort();
        let mut out = Vec::new();
        for w in keyed.windows(2) {
            if w[0].0 == w[1].0 {
                out.push((w[0].1.min(w[1].1), w[0].1.max(w[1].1)));
            }
        }
        out.sort_unstable();
        out
    }
}

/// `lambda = eta * t`, finite and positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LambdaParam(f64);

impl LambdaParam {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidLambda(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A discriminator whose kernel has been decomposed once; predictions at
/// any lambda are then `O(m^2)`.
pub(crate) struct FittedKernel {
    pub eig: SymEig,
    pub labels: DVector<f64>,
}

impl FittedKernel {
    pub fn new(stack: &LabeledStack, cfg: &NtkConfig) -> Result<Self> {
        let k = ntk::kernel_matrix(&stack.rows, cfg)?;
        Ok(Self {
            eig: matfun::sym_eig(&k)?,
            labels: stack.labels.clone(),
        })
    }

    pub fn predict(&self, lambda: f64) -> DVector<f64> {
        &self.labels - matfun::expm_neg_apply(&self.eig, lambda, &self.labels)
    }

    pub fn train_error(&self, lambda: f64) -> f64 {
        let r = self.predict(lambda) - &self.labels;
        r.norm_squared() / self.labels.len() as f64
    }
}

/// Mean predictions on the stacked rows `X ⊕ Z`.
pub fn predict(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: LambdaParam,
) -> Result<DVector<f64>> {
    let stack = LabeledStack::new(real, fake)?;
    Ok(FittedKernel::new(&stack, cfg)?.predict(lambda.value()))
}

/// `(1 / 2n) * ||D - y||^2` over the `2n` stacked rows.
pub fn train_error(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: LambdaParam,
) -> Result<f64> {
    let stack = LabeledStack::new(real, fake)?;
    Ok(FittedKernel::new(&stack, cfg)?.train_error(lambda.value()))
}

/// Result of the unidirectional lambda search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSearch {
    pub lambda: LambdaParam,
    /// Train error against the search noise at the returned lambda.
    pub train_error: f64,
}

/// I.i.d. uniform noise inside the per-coordinate `[min, max]` box of `data`.
pub fn uniform_box_noise(data: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let d = data.ncols();
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let col = data.column(j);
            (col.min(), col.max())
        })
        .collect();
    // fill row by row so the draw order does not depend on storage layout
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            out[(i, j)] = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        }
    }
    out
}

/// Smallest power-of-two lambda (starting at 1) for which the discriminator
/// separates `real` from uniform box noise to within `epsilon` train error.
pub fn search_lambda(real: &DMatrix<f64>, cfg: &NtkConfig, epsilon: f64, seed: u64) -> Result<LambdaSearch> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidConfig(format!("epsilon must be in (0, 0.5), got {epsilon}")));
    }
    if real.nrows() < 2 {
        return Err(Error::TooFewRows {
            min: 2,
            got: real.nrows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = uniform_box_noise(real, real.nrows(), &mut rng);
    let fitted = FittedKernel::new(&LabeledStack::new(real, &noise)?, cfg)?;
    let mut lambda = 1.0;
    let mut last = f64::NAN;
    loop {
        let err = fitted.train_error(lambda);
        // round-off negative eigenvalues of a rank-deficient kernel make
        // exp(-lambda mu) overflow long before MAX_LAMBDA
        if !err.is_finite() {
            return Err(Error::SeparationFailed { train_error: last });
        }
        if err <= epsilon {
            return Ok(LambdaSearch {
                lambda: LambdaParam::new(lambda)?,
                train_error: err,
            });
        }
        if lambda >= MAX_LAMBDA {
            return Err(Error::SeparationFailed { train_error: err });
        }
        last = err;
        lambda *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn labels_are_ones_then_zeros() {
        let s = LabeledStack::new(&toy(1, 3, 2), &toy(2, 3, 2)).unwrap();
        assert_eq!(s.labels.as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.n_real(), 3);
    }

    #[test]
    fn duplicate_rows_are_reported() {
        let x = toy(1, 3, 2);
        let s = LabeledStack::new(&x, &x).unwrap();
        assert_eq!(s.duplicate_rows(), vec![(0, 3), (1, 4), (2, 5)]);
        let s = LabeledStack::new(&x, &toy(9, 3, 2)).unwrap();
        assert!(s.duplicate_rows().is_empty());
    }

    #[test]
    fn lambda_param_validation() {
        assert!(LambdaParam::new(0.0).is_err());
        assert!(LambdaParam::new(-1.0).is_err());
        assert!(LambdaParam::new(f64::INFINITY).is_err());
        assert_eq!(LambdaParam::new(2.0).unwrap().value(), 2.0);
    }

    #[test]
    fn mismatched_widths_rejected() {
        let r = predict(&toy(1, 2, 2), &toy(2, 2, 3), &NtkConfig::default(), LambdaParam::new(1.0).unwrap());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn train_error_limits() {
        let cfg = NtkConfig::default();
        let (x, z) = (toy(3, 4, 2), toy(4, 4, 2));
        let e = train_error(&x, &z, &cfg, LambdaParam::new(1e-12).unwrap()).unwrap();
        assert!((e - 0.5).abs() < 1e-9);
        let fitted = FittedKernel::new(&LabeledStack::new(&x, &z).unwrap(), &cfg).unwrap();
        let big = 40.0 / fitted.eig.min_eigval();
        assert!(fitted.train_error(big) < 1e-10);
    }

    #[test]
    fn search_rejects_bad_epsilon() {
        let x = toy(1, 4, 2);
        assert!(search_lambda(&x, &NtkConfig::default(), 0.0, 1).is_err());
        assert!(search_lambda(&x, &NtkConfig::default(), 0.5, 1).is_err());
    }

    #[test]
    fn loose_epsilon_exits_early() {
        let x = toy(1, 8, 2);
        let s = search_lambda(&x, &NtkConfig::default(), 0.49, 1).unwrap();
        assert!(s.lambda.value() <= 4.0);
        assert!(s.train_error <= 0.49);
    }

    #[test]
    fn separation_failure_on_identical_noise() {
        // constant data: the box collapses, noise equals data, nothing separates
        let x = DMatrix::from_element(4, 2, 0.5);
        let r = search_lambda(&x, &NtkConfig::default(), 1e-2, 1);
        assert!(matches!(r, Err(Error::SeparationFailed { .. })));
    }
}
