//! Multi-resolution objective: one discriminator per pooling level, losses
//! summed. Gradients are pulled back through average pooling, whose adjoint
//! spreads each pooled cell uniformly over its block scaled by `1 / f^2`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{drive, initial_z, Eval, GdOptions, SynthState};
use crate::discriminator::LambdaParam;
use crate::gradient;
use crate::ntk::NtkConfig;
use crate::{Error, Result};

/// One discriminator in the multi-resolution sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionLevel {
    /// Side-length divisor; 1 is the native resolution.
    pub pool_factor: usize,
    pub cfg: NtkConfig,
    pub lambda: LambdaParam,
}

fn check_factor(h: usize, w: usize, factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::InvalidConfig("pool factor must be >= 1".into()));
    }
    if h % factor != 0 {
        return Err(Error::PoolNotDivisible { factor, side: h });
    }
    if w % factor != 0 {
        return Err(Error::PoolNotDivisible { factor, side: w });
    }
    Ok(())
}

/// Mean over each `factor x factor` block.
pub fn avg_pool(image: &DMatrix<f64>, factor: usize) -> Result<DMatrix<f64>> {
    let (h, w) = image.shape();
    check_factor(h, w, factor)?;
    let area = (factor * factor) as f64;
    Ok(DMatrix::from_fn(h / factor, w / factor, |r, c| {
        let mut s = 0.0;
        for i in 0..factor {
            for j in 0..factor {
                s += image[(r * factor + i, c * factor + j)];
            }
        }
        s / area
    }))
}

/// [`avg_pool`] applied to every row, each row a row-major `shape` image.
pub fn avg_pool_rows(rows: &DMatrix<f64>, shape: (usize, usize), factor: usize) -> Result<DMatrix<f64>> {
    let (h, w) = shape;
    if rows.ncols() != h * w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            got: rows.ncols(),
        });
    }
    check_factor(h, w, factor)?;
    if factor == 1 {
        return Ok(rows.clone());
    }
    let (ph, pw) = (h / factor, w / factor);
    let area = (factor * factor) as f64;
    let mut out = DMatrix::zeros(rows.nrows(), ph * pw);
    for n in 0..rows.nrows() {
        for r in 0..ph {
            for c in 0..pw {
                let mut s = 0.0;
                for i in 0..factor {
                    for j in 0..factor {
                        s += rows[(n, (r * factor + i) * w + c * factor + j)];
                    }
                }
                out[(n, r * pw + c)] = s / area;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`avg_pool_rows`]: each pooled entry is spread over its block
/// divided by the block area.
pub fn unpool_rows(pooled: &DMatrix<f64>, shape: (usize, usize), factor: usize) -> DMatrix<f64> {
    if factor == 1 {
        return pooled.clone();
    }
    let (h, w) = shape;
    let pw = w / factor;
    let area = (factor * factor) as f64;
    DMatrix::from_fn(pooled.nrows(), h * w, |n, k| {
        let (r, c) = (k / w, k % w);
        pooled[(n, (r / factor) * pw + c / factor)] / area
    })
}

/// Total multi-resolution loss, the per-level losses, and `dL/dZ`.
/// Levels are accumulated in the given order.
pub fn multires_objective(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    shape: (usize, usize),
    levels: &[ResolutionLevel],
) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    let pooled_real = levels
        .iter()
        .map(|l| avg_pool_rows(real, shape, l.pool_factor))
        .collect::<Result<Vec<_>>>()?;
    objective_with_pooled(&pooled_real, fake, shape, levels)
}

fn objective_with_pooled(
    pooled_real: &[DMatrix<f64>],
    fake: &DMatrix<f64>,
    shape: (usize, usize),
    levels: &[ResolutionLevel],
) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    if levels.is_empty() {
        return Err(Error::Empty("resolution levels"));
    }
    let mut per_level = Vec::with_capacity(levels.len());
    let mut total = 0.0;
    let mut grad: Option<DMatrix<f64>> = None;
    for (level, xr) in levels.iter().zip(pooled_real) {
        let zp = avg_pool_rows(fake, shape, level.pool_factor)?;
        let r = gradient::loss_and_grad(xr, &zp, &level.cfg, level.lambda.value())?;
        let g = unpool_rows(&r.grad, shape, level.pool_factor);
        grad = Some(match grad {
            None => g,
            Some(acc) => acc + g,
        });
        total = if per_level.is_empty() { r.loss } else { total + r.loss };
        per_level.push(r.loss);
    }
    Ok((total, per_level, grad.expect("at least one level")))
}

/// Gradient descent on the summed multi-resolution objective. Rows of
/// `real` are row-major images of size `shape`.
pub fn synthesize_multires(
    real: &DMatrix<f64>,
    shape: (usize, usize),
    levels: &[ResolutionLevel],
    opts: &GdOptions,
) -> Result<SynthState> {
    opts.validate()?;
    if levels.is_empty() {
        return Err(Error::Empty("resolution levels"));
    }
    let pooled_real = levels
        .iter()
        .map(|l| avg_pool_rows(real, shape, l.pool_factor))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let z0 = initial_z(real, real.nrows(), &opts.init, &mut rng)?;
    drive(z0, opts, &mut rng, |z, _| {
        let (loss, _, grad) = objective_with_pooled(&pooled_real, z, shape, levels)?;
        Ok(Eval { loss, grad, rows: None })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pool_examples() {
        let c = DMatrix::from_element(4, 4, 0.3);
        assert!(avg_pool(&c, 2).unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-16));
        let img = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(avg_pool(&img, 2).unwrap()[(0, 0)], 1.5);
        assert!(matches!(avg_pool(&img, 3), Err(Error::PoolNotDivisible { .. })));
    }

    #[test]
    fn pool_composition_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = DMatrix::from_fn(8, 8, |_, _| rng.gen::<f64>());
        let twice = avg_pool(&avg_pool(&img, 2).unwrap(), 2).unwrap();
        let once = avg_pool(&img, 4).unwrap();
        assert!((twice - &once).amax() < 1e-12);
        assert!((once.mean() - img.mean()).abs() < 1e-15);
    }

    #[test]
    fn row_pooling_matches_image_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = DMatrix::from_fn(4, 6, |_, _| rng.gen::<f64>());
        let row = DMatrix::from_row_slice(1, 24, &crate::rows::to_row_major(&img));
        let pooled = avg_pool_rows(&row, (4, 6), 2).unwrap();
        let direct = avg_pool(&img, 2).unwrap();
        assert_eq!(pooled.as_slice().len(), 6);
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(pooled[(0, r * 3 + c)], direct[(r, c)]);
            }
        }
    }

    #[test]
    fn unpool_is_the_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(2, 16, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
        let lhs = avg_pool_rows(&x, (4, 4), 2).unwrap().dot(&y);
        let rhs = x.dot(&unpool_rows(&y, (4, 4), 2));
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
