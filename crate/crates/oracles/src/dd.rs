//! Double-double (about 32 significant digits) evaluation of the ReLU NTK,
//! the matrix exponential and the synthesis loss. Only the field operations
//! and `sqrt` of `twofloat` are used; `acos` is computed here by Newton
//! iteration on a Taylor-series cosine.

use nalgebra::DMatrix;
use twofloat::TwoFloat;

pub type Dd = TwoFloat;

const PI: Dd = twofloat::consts::PI;

fn dd(v: f64) -> Dd {
    Dd::from(v)
}

/// `(cos t, sin t)` for `t` in `[0, pi]`.
fn cos_sin(t: Dd) -> (Dd, Dd) {
    let r = t / 16.0;
    let r2 = r * r;
    let (mut c, mut s) = (dd(1.0), r);
    let (mut tc, mut ts) = (dd(1.0), r);
    for k in 1..24 {
        let k = k as f64;
        tc = -tc * r2 / ((2.0 * k - 1.0) * (2.0 * k));
        ts = -ts * r2 / ((2.0 * k) * (2.0 * k + 1.0));
        c += tc;
        s += ts;
    }
    for _ in 0..4 {
        let (c2, s2) = (c * c - s * s, 2.0 * s * c);
        c = c2;
        s = s2;
    }
    (c, s)
}

pub fn acos(rho: Dd) -> Dd {
    if rho.hi() >= 1.0 {
        return dd(0.0);
    }
    if rho.hi() <= -1.0 {
        return PI;
    }
    let mut t = dd(f64::from(rho).acos());
    for _ in 0..3 {
        let (c, s) = cos_sin(t);
        t += (c - rho) / s;
    }
    t
}

fn dot(x: &[f64], y: &[f64]) -> Dd {
    x.iter().zip(y).fold(dd(0.0), |acc, (a, b)| acc + dd(*a) * *b)
}

/// ReLU NTK of depth `depth` in double-double.
pub fn relu_ntk(x: &[f64], y: &[f64], depth: usize, sw2: f64, sb2: f64) -> Dd {
    let scale = dd(sw2) / x.len() as f64;
    let mut a = scale * dot(x, x) + sb2;
    let mut b = scale * dot(y, y) + sb2;
    let mut c = scale * dot(x, y) + sb2;
    let same = x == y;
    let mut ntk = c;
    let two_pi = 2.0 * PI;
    for _ in 1..depth {
        let (j, s) = if same {
            (a / 2.0, dd(0.5))
        } else {
            let ab = a * b;
            let rho = c / ab.sqrt();
            let theta = acos(rho);
            let gap = ab - c * c;
            let root = if gap.hi() > 0.0 { gap.sqrt() } else { dd(0.0) };
            ((root + (PI - theta) * c) / two_pi, (PI - theta) / two_pi)
        };
        let next = sw2 * j + sb2;
        ntk = next + sw2 * ntk * s;
        c = next;
        a = sw2 * a / 2.0 + sb2;
        b = sw2 * b / 2.0 + sb2;
    }
    ntk
}

fn matmul(a: &[Dd], b: &[Dd], n: usize) -> Vec<Dd> {
    let mut out = vec![dd(0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik.hi() == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// `exp(a)` for a row-major `n x n` matrix: Taylor series on `a / 2^s`
/// with `||a / 2^s|| <= 1/8`, then `s` squarings.
pub fn expm(a: &[Dd], n: usize) -> Vec<Dd> {
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].hi().abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.125 {
        s += 1;
    }
    let factor = 2f64.powi(-s);
    let scaled: Vec<Dd> = a.iter().map(|v| *v * factor).collect();
    let mut out = vec![dd(0.0); n * n];
    let mut term = vec![dd(0.0); n * n];
    for i in 0..n {
        out[i * n + i] = dd(1.0);
        term[i * n + i] = dd(1.0);
    }
    for k in 1..40 {
        term = matmul(&term, &scaled, n);
        for v in term.iter_mut() {
            *v /= k as f64;
        }
        let mut biggest = 0.0f64;
        for (o, t) in out.iter_mut().zip(&term) {
            *o += *t;
            biggest = biggest.max(t.hi().abs());
        }
        if biggest < 1e-36 {
            break;
        }
    }
    for _ in 0..s {
        out = matmul(&out, &out, n);
    }
    out
}

/// Hyperparameters of the ReLU NTK used by [`loss`].
#[derive(Debug, Clone, Copy)]
pub struct ReluNtk {
    pub depth: usize,
    pub weight_var: f64,
    pub bias_var: f64,
}

/// `0.5 * ||1 - (I - exp(-lambda K)) y||^2` with `K` the kernel of the real
/// rows stacked over the fake rows and `y` ones then zeros.
pub fn loss(real: &DMatrix<f64>, fake: &DMatrix<f64>, k: ReluNtk, lambda: f64) -> Dd {
    let n = real.nrows();
    let m = n + fake.nrows();
    let rows: Vec<Vec<f64>> = real
        .row_iter()
        .chain(fake.row_iter())
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut a = vec![dd(0.0); m * m];
    for i in 0..m {
        for j in i..m {
            let v = -lambda * relu_ntk(&rows[i], &rows[j], k.depth, k.weight_var, k.bias_var);
            a[i * m + j] = v;
            a[j * m + i] = v;
        }
    }
    let e = expm(&a, m);
    let mut total = dd(0.0);
    for i in 0..m {
        // (E y)_i sums the columns belonging to real rows
        let ey = (0..n).fold(dd(0.0), |acc, j| acc + e[i * m + j]);
        let label = if i < n { 1.0 } else { 0.0 };
        let resid = 1.0 - (label - ey);
        total += resid * resid;
    }
    total * 0.5
}

/// Central differences of [`loss`] over every entry of `fake`. The actual
/// forward and backward offsets after rounding `z +- step` are used as the
/// denominator.
pub fn loss_gradient_fd(real: &DMatrix<f64>, fake: &DMatrix<f64>, k: ReluNtk, lambda: f64, step: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(fake.nrows(), fake.ncols());
    let mut probe = fake.clone();
    for i in 0..fake.nrows() {
        for j in 0..fake.ncols() {
            let z = fake[(i, j)];
            let (up, down) = (z + step, z - step);
            probe[(i, j)] = up;
            let lu = loss(real, &probe, k, lambda);
            probe[(i, j)] = down;
            let ld = loss(real, &probe, k, lambda);
            probe[(i, j)] = z;
            out[(i, j)] = f64::from((lu - ld) / (up - down));
        }
    }
    out
}
