//! Kernel oracles: the ReLU NTK recursion in angular form, Monte Carlo
//! estimates of the per-layer Gaussian expectations, and an `erf` that
//! does not come from any math library.

use std::f64::consts::PI;

use rand::Rng;

/// Unrolled ReLU recursion written with the angular form of the arc-cosine
/// kernel, `|x||y| (sin t + (pi - t) cos t) / (2 pi)`.
pub fn relu_ntk_angular(x: &[f64], y: &[f64], depth: usize, sw2: f64, sb2: f64) -> f64 {
    let d = x.len() as f64;
    let ip = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    let mut kxx = sw2 * ip(x, x) / d + sb2;
    let mut kyy = sw2 * ip(y, y) / d + sb2;
    let mut kxy = sw2 * ip(x, y) / d + sb2;
    let mut theta_ntk = kxy;
    for _ in 1..depth {
        let norm = (kxx * kyy).sqrt();
        let cos = (kxy / norm).clamp(-1.0, 1.0);
        let ang = cos.acos();
        let j = norm / (2.0 * PI) * (ang.sin() + (PI - ang) * cos);
        let s = (PI - ang) / (2.0 * PI);
        let next_xy = sb2 + sw2 * j;
        theta_ntk = next_xy + sw2 * theta_ntk * s;
        kxy = next_xy;
        kxx = sb2 + sw2 * kxx / 2.0;
        kyy = sb2 + sw2 * kyy / 2.0;
    }
    theta_ntk
}

/// Monte Carlo estimates of `E[f(u) f(v)]` and `E[f'(u) f'(v)]` for ReLU
/// and erf, with `(u, v) ~ N(0, [[a, c], [c, b]])`.
#[derive(Debug, Clone, Copy)]
pub struct Expectations {
    pub relu_j: f64,
    pub relu_s: f64,
    pub erf_j: f64,
    pub erf_s: f64,
}

/// Jittered stratified sampling: the unit square is cut into an `n x n`
/// grid with `n * n >= samples`, one uniform point is drawn per cell, and
/// each point is mapped to a standard Gaussian pair by Box-Muller.
pub fn monte_carlo<R: Rng>(a: f64, c: f64, b: f64, samples: usize, rng: &mut R) -> Expectations {
    let l11 = a.sqrt();
    let l21 = c / l11;
    let l22 = (b - l21 * l21).max(0.0).sqrt();
    let relu = |x: f64| x.max(0.0);
    let step = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };
    let derf = |x: f64| 2.0 / PI.sqrt() * (-x * x).exp();
    let n = (samples as f64).sqrt().ceil() as usize;
    let (mut rj, mut rs, mut ej, mut es) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let phi = 2.0 * PI * (i as f64 + rng.gen::<f64>()) / n as f64;
            let tail = 1.0 - (j as f64 + rng.gen::<f64>()) / n as f64;
            let r = (-2.0 * tail.max(f64::MIN_POSITIVE).ln()).sqrt();
            let (g1, g2) = (r * phi.cos(), r * phi.sin());
            let u = l11 * g1;
            let v = l21 * g1 + l22 * g2;
            rj += relu(u) * relu(v);
            rs += step(u) * step(v);
            ej += erf(u) * erf(v);
            es += derf(u) * derf(v);
        }
    }
    let total = (n * n) as f64;
    Expectations {
        relu_j: rj / total,
        relu_s: rs / total,
        erf_j: ej / total,
        erf_s: es / total,
    }
}

/// Maclaurin series below 2.5, Lentz continued fraction for the complement
/// above.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.5 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        for n in 1..200 {
            term *= -x2 / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..300 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x * x).exp() / (PI.sqrt() * f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_known_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(3.0) - 0.999_977_909_503_001_4).abs() < 1e-15);
        assert!((erf(-0.5) + 0.520_499_877_813_046_5).abs() < 1e-15);
    }

    #[test]
    fn depth_two_relu_at_identical_inputs() {
        // k1 = |x|^2 sw2 / d; the arc-cosine kernel at angle 0 is k1 / 2
        let v = relu_ntk_angular(&[1.0, 1.0], &[1.0, 1.0], 2, 2.0, 0.0);
        assert!((v - (2.0 * 1.0 + 2.0 * 2.0 * 0.5)).abs() < 1e-12);
    }
}
