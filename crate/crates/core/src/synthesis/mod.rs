//! Gradient-descent synthesis loops.
//!
//! All variants share one driver: evaluate loss and gradient on (a subset
//! of) the generated rows, record the trace, update, optionally clamp.
//! Runs are deterministic given `GdOptions::seed`.

mod generator;
mod multires;

use nalgebra::DMatrix;
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::discriminator::{uniform_box_noise, LambdaParam};
use crate::gradient;
use crate::ntk::NtkConfig;
use crate::rows;
use crate::{Error, Result};

pub use generator::{generator_loss_and_grad, train_generator, GeneratorGrads, GeneratorMlp, GeneratorRun, OutputActivation};
pub use multires::{avg_pool, avg_pool_rows, multires_objective, synthesize_multires, unpool_rows, ResolutionLevel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    PlainGd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Initial generated rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// I.i.d. uniform inside the per-coordinate range of the data.
    UniformDataBox,
    /// Per-coordinate Gaussian with the data's mean and standard deviation.
    GaussianStd,
    Provided(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOptions {
    /// Synthesis step size (not the discriminator's learning rate).
    pub step_size: f64,
    pub max_iters: usize,
    pub optimizer: Optimizer,
    pub record_every: usize,
    pub seed: u64,
    pub init: Init,
    /// Box every coordinate of `Z` is clamped into after each update.
    pub clamp: Option<(f64, f64)>,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_iters: 1000,
            optimizer: Optimizer::PlainGd,
            record_every: 1,
            seed: 0,
            init: Init::UniformDataBox,
            clamp: None,
        }
    }
}

impl GdOptions {
    pub fn validate(&self) -> Result<()> {
        // a zero step is allowed: it freezes Z and is handy for diagnostics
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::InvalidConfig(format!("step_size must be >= 0, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!("empty clamp range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// `min_{j <= iter} ||grad_j||^2` over every iteration, recorded or not.
    pub min_grad_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthState {
    pub z: DMatrix<f64>,
    /// Number of updates applied.
    pub iter: usize,
    pub trace: Vec<TracePoint>,
}

impl SynthState {
    pub fn initial_loss(&self) -> Option<f64> {
        self.trace.first().map(|t| t.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.trace.last().map(|t| t.loss)
    }
}

/// Per-coordinate optimizer state.
pub(crate) struct OptState {
    kind: Optimizer,
    step_size: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    pub fn new(kind: Optimizer, step_size: f64, len: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::PlainGd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (vec![0.0; len], vec![0.0; len]),
        };
        Self {
            kind,
            step_size,
            m,
            v,
            t: 0,
        }
    }

    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Updates one coordinate `slot` with gradient `g`.
    pub fn apply(&mut self, slot: usize, param: &mut f64, g: f64) {
        match self.kind {
            Optimizer::PlainGd => *param -= self.step_size * g,
            Optimizer::Adam { beta1, beta2, eps } => {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / (1.0 - beta1.powi(self.t));
                let vh = *v / (1.0 - beta2.powi(self.t));
                *param -= self.step_size * mh / (vh.sqrt() + eps);
            }
        }
    }
}

pub(crate) fn initial_z(data: &DMatrix<f64>, n: usize, init: &Init, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    match init {
        Init::UniformDataBox => Ok(uniform_box_noise(data, n, rng)),
        Init::GaussianStd => {
            let d = data.ncols();
            let stats: Vec<(f64, f64)> = (0..d)
                .map(|j| {
                    let c = data.column(j);
                    let mean = c.mean();
                    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len().max(1) as f64;
                    (mean, var.sqrt())
                })
                .collect();
            let mut z = DMatrix::zeros(n, d);
            for i in 0..n {
                for (j, &(mean, sd)) in stats.iter().enumerate() {
                    let e: f64 = rng.sample(StandardNormal);
                    z[(i, j)] = mean + sd * e;
                }
            }
            Ok(z)
        }
        Init::Provided(z) => {
            if z.ncols() != data.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: data.ncols(),
                    got: z.ncols(),
                });
            }
            if !rows::all_finite(z) {
                return Err(Error::NonFinite("provided initial Z"));
            }
            Ok(z.clone())
        }
    }
}

/// One objective evaluation: loss, gradient rows, and which rows of `Z`
/// the gradient belongs to (`None` = all rows in order).
pub(crate) struct Eval {
    pub loss: f64,
    pub grad: DMatrix<f64>,
    pub rows: Option<Vec<usize>>,
}

pub(crate) fn drive<F>(mut z: DMatrix<f64>, opts: &GdOptions, rng: &mut ChaCha8Rng, mut eval: F) -> Result<SynthState>
where
    F: FnMut(&DMatrix<f64>, &mut ChaCha8Rng) -> Result<Eval>,
{
    let mut opt = OptState::new(opts.optimizer, opts.step_size, z.len());
    let mut trace = Vec::new();
    let mut min_sq = f64::INFINITY;
    let nrows = z.nrows();
    for s in 0..=opts.max_iters {
        let abort = |reason: String, z: &DMatrix<f64>, trace: &Vec<TracePoint>| Error::Aborted {
            iter: s,
            reason,
            state: Box::new(SynthState {
                z: z.clone(),
                iter: s,
                trace: trace.clone(),
            }),
        };
        let e = match eval(&z, rng) {
            Ok(e) => e,
            Err(err @ Error::NonFinite(_)) => return Err(abort(err.to_string(), &z, &trace)),
            Err(err) => return Err(err),
        };
        let grad_norm = e.grad.norm();
        if !e.loss.is_finite() || !grad_norm.is_finite() {
            return Err(abort("non-finite loss".into(), &z, &trace));
        }
        min_sq = min_sq.min(grad_norm * grad_norm);
        if s % opts.record_every == 0 || s == opts.max_iters {
            trace.push(TracePoint {
                iter: s,
                loss: e.loss,
                grad_norm,
                min_grad_sq: min_sq,
            });
        }
        if s == opts.max_iters {
            break;
        }
        opt.begin_step();
        let d = z.ncols();
        let mut update_row = |src: usize, dst: usize, z: &mut DMatrix<f64>| {
            for j in 0..d {
                let slot = dst + j * nrows;
                opt.apply(slot, &mut z[(dst, j)], e.grad[(src, j)]);
                if let Some((lo, hi)) = opts.clamp {
                    z[(dst, j)] = z[(dst, j)].clamp(lo, hi);
                }
            }
        };
        match &e.rows {
            None => (0..nrows).for_each(|i| update_row(i, i, &mut z)),
            Some(idx) => idx.iter().enumerate().for_each(|(src, &dst)| update_row(src, dst, &mut z)),
        }
    }
    Ok(SynthState {
        z,
        iter: opts.max_iters,
        trace,
    })
}

fn check_lambda(lambda: LambdaParam) -> Result<f64> {
    Ok(LambdaParam::new(lambda.value())?.value())
}

/// Minimizes `0.5 * ||1 - D(X, Z)||^2` over `Z` with `n = rows(X)`.
pub fn synthesize_full(real: &DMatrix<f64>, cfg: &NtkConfig, lambda: LambdaParam, opts: &GdOptions) -> Result<SynthState> {
    opts.validate()?;
    let lambda = check_lambda(lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let z0 = initial_z(real, real.nrows(), &opts.init, &mut rng)?;
    drive(z0, opts, &mut rng, |z, _| {
        let r = gradient::loss_and_grad(real, z, cfg, lambda)?;
        Ok(Eval {
            loss: r.loss,
            grad: r.grad,
            rows: None,
        })
    })
}

/// Batch-wise objective: every iteration draws `batch / 2` real rows and
/// `batch / 2` generated rows without replacement and updates only the
/// drawn generated rows. With `batch = 2n` every row is drawn, in order,
/// and the run is iterate-for-iterate identical to [`synthesize_full`].
pub fn synthesize_batchwise(
    real: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: LambdaParam,
    batch: usize,
    opts: &GdOptions,
) -> Result<SynthState> {
    opts.validate()?;
    let lambda = check_lambda(lambda)?;
    let n = real.nrows();
    if batch % 2 != 0 || batch < 2 || batch > 2 * n {
        return Err(Error::InvalidConfig(format!(
            "batch must be even and in [2, {}], got {batch}",
            2 * n
        )));
    }
    let half = batch / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let z0 = initial_z(real, n, &opts.init, &mut rng)?;
    drive(z0, opts, &mut rng, |z, rng| {
        let (xi, zi) = if half == n {
            ((0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>())
        } else {
            (index::sample(rng, n, half).into_vec(), index::sample(rng, n, half).into_vec())
        };
        let xb = rows::select_rows(real, &xi);
        let zb = rows::select_rows(z, &zi);
        let r = gradient::loss_and_grad(&xb, &zb, cfg, lambda)?;
        Ok(Eval {
            loss: r.loss,
            grad: r.grad,
            rows: Some(zi),
        })
    })
}
