//! Fully connected NNGP and NTK kernels.
//!
//! For an `L`-layer network with weight variance `sw2` and bias variance
//! `sb2` the kernels obey the layer recursion
//!
//! ```text
//! k1(x, y)   = sw2 / d * <x, y> + sb2          (NNGP and NTK agree at layer 1)
//! nngp_l     = sb2 + sw2 * E[phi(u) phi(v)]    (u, v) ~ N(0, [[kxx, kxy], [kxy, kyy]]_{l-1}
//! ntk_l      = nngp_l + sw2 * ntk_{l-1} * E[phi'(u) phi'(v)]
//! ```
//!
//! The Gaussian expectations have closed forms for ReLU (arc-cosine kernel)
//! and erf. Everything here is `f64`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Correlations this close to +-1 take the exact `theta in {0, pi}` branch.
const RHO_EDGE: f64 = 1e-12;

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Erf,
}

/// Architecture of the infinitely wide discriminator ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkConfig {
    /// Number of layers `L >= 1`.
    pub depth: usize,
    /// `sigma_w^2 > 0`.
    pub weight_var: f64,
    /// `sigma_b^2 >= 0`.
    pub bias_var: f64,
    pub activation: Activation,
}

impl Default for NtkConfig {
    /// Three ReLU layers at the ReLU critical point `sigma_w^2 = 2`, with a
    /// small bias variance so that `k(x, x) > 0` for every input.
    fn default() -> Self {
        Self {
            depth: 3,
            weight_var: 2.0,
            bias_var: 0.01,
            activation: Activation::Relu,
        }
    }
}

impl NtkConfig {
    pub fn relu(depth: usize, weight_var: f64, bias_var: f64) -> Self {
        Self {
            depth,
            weight_var,
            bias_var,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be >= 1".into()));
        }
        if !(self.weight_var.is_finite() && self.weight_var > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_var must be finite and > 0, got {}",
                self.weight_var
            )));
        }
        if !(self.bias_var.is_finite() && self.bias_var >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bias_var must be finite and >= 0, got {}",
                self.bias_var
            )));
        }
        Ok(())
    }
}

/// One layer's NNGP covariance entries for a pair of inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovTriple {
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
}

impl CovTriple {
    pub fn new(cov_xx: f64, cov_xy: f64, cov_yy: f64) -> Self {
        Self {
            cov_xx,
            cov_xy,
            cov_yy,
        }
    }

    /// `cov_xy^2 <= cov_xx * cov_yy + tol` and non-negative diagonals.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.cov_xx >= 0.0
            && self.cov_yy >= 0.0
            && self.cov_xy * self.cov_xy <= self.cov_xx * self.cov_yy + tol
    }
}

/// Symmetric Gram matrix of the NTK over a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries
            .diagonal()
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}

// ---------------------------------------------------------------------------
// Gaussian expectations and their partial derivatives.
// ---------------------------------------------------------------------------

/// `E[phi(u) phi(v)]`, `E[phi'(u) phi'(v)]` and their partials with respect
/// to the three covariance entries `(a, b, c) = (cov_xx, cov_yy, cov_xy)`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Expectations {
    pub j: f64,
    pub j_a: f64,
    pub j_b: f64,
    pub j_c: f64,
    pub s: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub s_c: f64,
}

/// Gaussian expectations for a single input, `E[phi(u)^2]` and
/// `E[phi'(u)^2]`, with their total derivatives in the variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct DiagExpectations {
    pub j: f64,
    pub j_a: f64,
    pub s: f64,
    pub s_a: f64,
}

fn relu_expectations(t: CovTriple) -> Expectations {
    let (a, b, c) = (t.cov_xx, t.cov_yy, t.cov_xy);
    if a <= 0.0 || b <= 0.0 {
        // zero variance: phi(u) = 0 almost surely, phi'(u) taken as 0
        return Expectations::default();
    }
    let norm = (a * b).sqrt();
    let rho = (c / norm).clamp(-1.0, 1.0);
    if rho >= 1.0 - RHO_EDGE {
        // theta = 0
        return Expectations {
            j: norm / 2.0,
            j_a: 0.0,
            j_b: 0.0,
            j_c: 0.5,
            s: 0.5,
            ..Default::default()
        };
    }
    if rho <= -1.0 + RHO_EDGE {
        // theta = pi
        return Expectations::default();
    }
    let theta = rho.acos();
    let sin = (1.0 - rho * rho).sqrt();
    // sqrt(ab - c^2)
    let root = norm * sin;
    let j = (root + (PI - theta) * c) / (2.0 * PI);
    let s = (PI - theta) / (2.0 * PI);
    Expectations {
        j,
        j_a: root / (4.0 * PI * a),
        j_b: root / (4.0 * PI * b),
        j_c: s,
        s,
        s_a: -c / (4.0 * PI * a * root),
        s_b: -c / (4.0 * PI * b * root),
        s_c: 1.0 / (2.0 * PI * root),
    }
}

fn relu_diag(a: f64) -> DiagExpectations {
    if a <= 0.0 {
        return DiagExpectations::default();
    }
    DiagExpectations {
        j: a / 2.0,
        j_a: 0.5,
        s: 0.5,
        s_a: 0.0,
    }
}

fn erf_expectations(t: CovTriple) -> Expectations {
    let (a, b, c) = (t.cov_xx, t.cov_yy, t.cov_xy);
    let p = 1.0 + 2.0 * a;
    let q = 1.0 + 2.0 * b;
    let pq = p * q;
    // PQ - 4c^2 >= 1 for any valid covariance
    let gap = (pq - 4.0 * c * c).max(f64::MIN_POSITIVE);
    let root = gap.sqrt();
    let r = (2.0 * c / pq.sqrt()).clamp(-1.0, 1.0);
    let j = 2.0 / PI * r.asin();
    let s = 4.0 / PI / root;
    let gap32 = gap * root;
    Expectations {
        j,
        j_a: -4.0 * c / (PI * p * root),
        j_b: -4.0 * c / (PI * q * root),
        j_c: s,
        s,
        s_a: -4.0 * q / (PI * gap32),
        s_b: -4.0 * p / (PI * gap32),
        s_c: 16.0 * c / (PI * gap32),
    }
}

fn erf_diag(a: f64) -> DiagExpectations {
    let p = 1.0 + 2.0 * a;
    let root = (1.0 + 4.0 * a).sqrt();
    DiagExpectations {
        j: 2.0 / PI * (2.0 * a / p).asin(),
        j_a: 4.0 / (PI * p * root),
        s: 4.0 / PI / root,
        s_a: -8.0 / (PI * root * root * root),
    }
}

pub(crate) fn expectations(t: CovTriple, act: Activation) -> Expectations {
    match act {
        Activation::Relu => relu_expectations(t),
        Activation::Erf => erf_expectations(t),
    }
}

pub(crate) fn diag_expectations(a: f64, act: Activation) -> DiagExpectations {
    match act {
        Activation::Relu => relu_diag(a),
        Activation::Erf => erf_diag(a),
    }
}

// ---------------------------------------------------------------------------
// Public layer operations.
// ---------------------------------------------------------------------------

/// Next-layer NNGP covariance triple.
///
/// Diagonal entries use the single-input expectation directly, so for ReLU
/// they are exactly `sb2 + sw2 * cov / 2`. Zero-variance inputs yield a zero
/// cross expectation rather than NaN.
pub fn nngp_step(prev: CovTriple, cfg: &NtkConfig) -> CovTriple {
    let e = expectations(prev, cfg.activation);
    let dx = diag_expectations(prev.cov_xx, cfg.activation);
    let dy = diag_expectations(prev.cov_yy, cfg.activation);
    CovTriple {
        cov_xx: cfg.bias_var + cfg.weight_var * dx.j,
        cov_xy: cfg.bias_var + cfg.weight_var * e.j,
        cov_yy: cfg.bias_var + cfg.weight_var * dy.j,
    }
}

/// `E[phi'(u) phi'(v)]` under the pair covariance `prev`, which for ReLU is
/// `(pi - theta) / (2 pi)` and lies in `[0, 1/2]`. Returns 0 when either
/// variance is zero.
pub fn sigma_dot(prev: CovTriple) -> f64 {
    relu_expectations(prev).s
}

/// [`sigma_dot`] for the configured activation.
pub fn sigma_dot_for(prev: CovTriple, act: Activation) -> f64 {
    expectations(prev, act).s
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Layer-1 covariance triple `sw2 / d * <., .> + sb2`.
fn base_triple(x: &[f64], y: &[f64], cfg: &NtkConfig) -> CovTriple {
    let scale = cfg.weight_var / x.len() as f64;
    CovTriple {
        cov_xx: scale * dot(x, x) + cfg.bias_var,
        cov_xy: scale * dot(x, y) + cfg.bias_var,
        cov_yy: scale * dot(y, y) + cfg.bias_var,
    }
}

pub(crate) fn ntk_pair_unchecked(x: &[f64], y: &[f64], cfg: &NtkConfig) -> f64 {
    let mut cov = base_triple(x, y, cfg);
    let mut ntk = cov.cov_xy;
    for _ in 1..cfg.depth {
        let e = expectations(cov, cfg.activation);
        let next = nngp_step(cov, cfg);
        ntk = next.cov_xy + cfg.weight_var * ntk * e.s;
        cov = next;
    }
    ntk
}

/// NTK value `k^L(x, y)`.
pub fn ntk_pair(x: &[f64], y: &[f64], cfg: &NtkConfig) -> Result<f64> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("input vector"));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ntk_pair input"));
    }
    Ok(ntk_pair_unchecked(x, y, cfg))
}

/// Gram matrix over the rows of `rows`. Entry `(i, j)` is computed once as
/// `ntk_pair(row_i, row_j)` and mirrored.
pub fn kernel_matrix(rows: &DMatrix<f64>, cfg: &NtkConfig) -> Result<KernelMatrix> {
    cfg.validate()?;
    if rows.nrows() < 2 {
        return Err(Error::TooFewRows {
            min: 2,
            got: rows.nrows(),
        });
    }
    if rows.ncols() == 0 {
        return Err(Error::Empty("row width"));
    }
    if !crate::rows::all_finite(rows) {
        return Err(Error::NonFinite("kernel_matrix rows"));
    }
    let buf = crate::rows::to_row_major(rows);
    Ok(KernelMatrix {
        entries: gram_row_major(&buf, rows.nrows(), rows.ncols(), cfg),
    })
}

pub(crate) fn gram_row_major(buf: &[f64], m: usize, d: usize, cfg: &NtkConfig) -> DMatrix<f64> {
    let row = |i: usize| &buf[i * d..(i + 1) * d];
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = ntk_pair_unchecked(row(i), row(j), cfg);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

// ---------------------------------------------------------------------------
// Reverse mode through the recursion.
// ---------------------------------------------------------------------------

/// Gradient of `k^L(x, y)` for two distinct rows, in the form
///
/// ```text
/// dk/dx = cross * y + self_x * x
/// dk/dy = cross * x + self_y * y
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairGrad {
    pub value: f64,
    pub cross: f64,
    pub self_x: f64,
    pub self_y: f64,
}

/// Reverse-mode derivative of the NTK for two distinct variables `x`, `y`.
///
/// Where the ReLU recursion hits `theta in {0, pi}` the derivative of the
/// `sigma_dot` factor is unbounded; the zero subgradient is used there.
pub(crate) fn pair_backward(x: &[f64], y: &[f64], cfg: &NtkConfig) -> PairGrad {
    let depth = cfg.depth;
    let sw2 = cfg.weight_var;
    let mut covs = Vec::with_capacity(depth);
    let mut ntks = Vec::with_capacity(depth);
    let mut cov = base_triple(x, y, cfg);
    let mut ntk = cov.cov_xy;
    covs.push(cov);
    ntks.push(ntk);
    for _ in 1..depth {
        let e = expectations(cov, cfg.activation);
        let next = nngp_step(cov, cfg);
        ntk = next.cov_xy + sw2 * ntk * e.s;
        cov = next;
        covs.push(cov);
        ntks.push(ntk);
    }

    // adjoints of (cov_xx, cov_yy, cov_xy, ntk) at the current layer
    let (mut ga, mut gb, mut gc, mut gk) = (0.0, 0.0, 0.0, 1.0);
    for l in (1..depth).rev() {
        let prev = covs[l - 1];
        let e = expectations(prev, cfg.activation);
        let dx = diag_expectations(prev.cov_xx, cfg.activation);
        let dy = diag_expectations(prev.cov_yy, cfg.activation);
        let k_prev = ntks[l - 1];
        // ntk_l = cov_xy_l + sw2 * ntk_{l-1} * s
        let gc_total = gc + gk;
        let na = ga * sw2 * dx.j_a + gc_total * sw2 * e.j_a + gk * sw2 * k_prev * e.s_a;
        let nb = gb * sw2 * dy.j_a + gc_total * sw2 * e.j_b + gk * sw2 * k_prev * e.s_b;
        let nc = gc_total * sw2 * e.j_c + gk * sw2 * k_prev * e.s_c;
        let nk = gk * sw2 * e.s;
        ga = na;
        gb = nb;
        gc = nc;
        gk = nk;
    }
    // layer 1: ntk_1 = cov_xy_1
    gc += gk;
    let scale = sw2 / x.len() as f64;
    PairGrad {
        value: ntk,
        cross: gc * scale,
        self_x: 2.0 * ga * scale,
        self_y: 2.0 * gb * scale,
    }
}

/// `k^L(x, x)` and the coefficient `g` with `d k(x, x) / dx = g * x`.
pub(crate) fn diag_backward(x: &[f64], cfg: &NtkConfig) -> (f64, f64) {
    let sw2 = cfg.weight_var;
    let depth = cfg.depth;
    let scale = sw2 / x.len() as f64;
    let mut vars = Vec::with_capacity(depth);
    let mut ntks = Vec::with_capacity(depth);
    let mut var = scale * dot(x, x) + cfg.bias_var;
    let mut ntk = var;
    vars.push(var);
    ntks.push(ntk);
    for _ in 1..depth {
        let e = diag_expectations(var, cfg.activation);
        var = cfg.bias_var + sw2 * e.j;
        ntk = var + sw2 * ntk * e.s;
        vars.push(var);
        ntks.push(ntk);
    }
    let (mut gv, mut gk) = (0.0, 1.0);
    for l in (1..depth).rev() {
        let e = diag_expectations(vars[l - 1], cfg.activation);
        let gv_total = gv + gk;
        let nv = gv_total * sw2 * e.j_a + gk * sw2 * ntks[l - 1] * e.s_a;
        let nk = gk * sw2 * e.s;
        gv = nv;
        gk = nk;
    }
    gv += gk;
    (ntk, 2.0 * gv * scale)
}
