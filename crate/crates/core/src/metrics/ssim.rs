use nalgebra::DMatrix;

use crate::{Error, Result};

/// Gaussian-windowed SSIM settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimOptions {
    pub filter_size: usize,
    pub filter_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self {
            filter_size: 4,
            filter_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.filter_size > 0
            && [self.filter_sigma, self.k1, self.k2, self.dynamic_range]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid SSIM options {self:?}")))
        }
    }

    /// Normalized separable Gaussian taps, centered on the window.
    fn taps(&self) -> Vec<f64> {
        let c = (self.filter_size as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.filter_size)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.filter_sigma.powi(2))).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Mean SSIM over every fully contained window position (stride 1, no
/// padding).
pub fn ssim(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &SsimOptions) -> Result<f64> {
    opts.validate()?;
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (h, w) = a.shape();
    let f = opts.filter_size;
    if h < f || w < f {
        return Err(Error::InvalidConfig(format!("image {h}x{w} smaller than the {f}x{f} window")));
    }
    let taps = opts.taps();
    let c1 = (opts.k1 * opts.dynamic_range).powi(2);
    let c2 = (opts.k2 * opts.dynamic_range).powi(2);
    let (oh, ow) = (h - f + 1, w - f + 1);
    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..f {
                for j in 0..f {
                    let wgt = taps[i] * taps[j];
                    let (x, y) = (a[(r + i, c + j)], b[(r + i, c + j)]);
                    ma += wgt * x;
                    mb += wgt * y;
                    saa += wgt * x * x;
                    sbb += wgt * y * y;
                    sab += wgt * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Splits row-major image rows into matrices.
pub fn images_from_rows(rows: &DMatrix<f64>, shape: (usize, usize)) -> Result<Vec<DMatrix<f64>>> {
    let (h, w) = shape;
    if rows.ncols() != h * w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            got: rows.ncols(),
        });
    }
    Ok((0..rows.nrows())
        .map(|n| DMatrix::from_fn(h, w, |r, c| rows[(n, r * w + c)]))
        .collect())
}

/// Mean over generated images of the best SSIM against any data image.
pub fn am_ssim(gen: &[DMatrix<f64>], data: &[DMatrix<f64>], opts: &SsimOptions) -> Result<f64> {
    if gen.is_empty() {
        return Err(Error::Empty("generated image set"));
    }
    if data.is_empty() {
        return Err(Error::Empty("data image set"));
    }
    let mut total = 0.0;
    for g in gen {
        let mut best = f64::NEG_INFINITY;
        for x in data {
            best = best.max(ssim(g, x, opts)?);
        }
        total += best;
    }
    Ok(total / gen.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(h, w, |_, _| rng.gen::<f64>())
    }

    #[test]
    fn identity_symmetry_range() {
        let o = SsimOptions::default();
        for s in 0..10 {
            let a = random_image(s, 8, 9);
            let b = random_image(s + 100, 8, 9);
            assert!((ssim(&a, &a, &o).unwrap() - 1.0).abs() < 1e-9);
            let ab = ssim(&a, &b, &o).unwrap();
            let ba = ssim(&b, &a, &o).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn constant_images_closed_form() {
        let o = SsimOptions::default();
        let z = DMatrix::from_element(6, 6, 0.0);
        let one = DMatrix::from_element(6, 6, 1.0);
        let c1 = (o.k1 * o.dynamic_range).powi(2);
        let c2 = (o.k2 * o.dynamic_range).powi(2);
        let expected = (2.0 * 0.0 * 1.0 + c1) * (2.0 * 0.0 + c2) / ((0.0 + 1.0 + c1) * (0.0 + 0.0 + c2));
        assert!((ssim(&z, &one, &o).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = SsimOptions::default().taps();
        assert_eq!(t.len(), 4);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[3]);
        assert_eq!(t[1], t[2]);
    }

    #[test]
    fn errors() {
        let o = SsimOptions::default();
        assert!(ssim(&random_image(1, 4, 4), &random_image(2, 4, 5), &o).is_err());
        assert!(ssim(&random_image(1, 3, 3), &random_image(2, 3, 3), &o).is_err());
        assert!(am_ssim(&[], &[random_image(1, 4, 4)], &o).is_err());
        assert!(am_ssim(&[random_image(1, 4, 4)], &[], &o).is_err());
    }

    #[test]
    fn am_ssim_self_match() {
        let o = SsimOptions::default();
        let data: Vec<_> = (0..5).map(|s| random_image(s, 8, 8)).collect();
        assert!((am_ssim(&data, &data, &o).unwrap() - 1.0).abs() < 1e-9);
        assert!((am_ssim(&data[2..3], &data, &o).unwrap() - 1.0).abs() < 1e-9);
    }
}
