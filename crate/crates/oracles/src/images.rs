//! SSIM evaluated window by window from its definition.

use nalgebra::DMatrix;

/// Gaussian-weighted SSIM with a full `size x size` window (no separable
/// filtering), averaged over every valid window position.
pub fn ssim(a: &DMatrix<f64>, b: &DMatrix<f64>, size: usize, sigma: f64, k1: f64, k2: f64, range: f64) -> f64 {
    let centre = (size as f64 - 1.0) / 2.0;
    let mut window = DMatrix::from_fn(size, size, |i, j| {
        let r2 = (i as f64 - centre).powi(2) + (j as f64 - centre).powi(2);
        (-r2 / (2.0 * sigma * sigma)).exp()
    });
    let total = window.sum();
    window /= total;
    let (c1, c2) = ((k1 * range).powi(2), (k2 * range).powi(2));
    let (h, w) = a.shape();
    let mut acc = Vec::new();
    for r in 0..=h - size {
        for c in 0..=w - size {
            let pa = a.view((r, c), (size, size));
            let pb = b.view((r, c), (size, size));
            let mu_a = window.component_mul(&pa).sum();
            let mu_b = window.component_mul(&pb).sum();
            let var_a = window.component_mul(&pa.map(|v| (v - mu_a).powi(2))).sum();
            let var_b = window.component_mul(&pb.map(|v| (v - mu_b).powi(2))).sum();
            let cov = window.component_mul(&pa.zip_map(&pb, |x, y| (x - mu_a) * (y - mu_b))).sum();
            acc.push(
                ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)),
            );
        }
    }
    acc.iter().sum::<f64>() / acc.len() as f64
}
