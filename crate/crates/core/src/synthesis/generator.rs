//! Small fully connected generator trained against the closed-form
//! discriminator on mini-batches: `b/2` real rows and `G(z)` for `b/2`
//! latent draws `z ~ N(0, I)`.

use nalgebra::{DMatrix, DVector};
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GdOptions, OptState, SynthState, TracePoint};
use crate::discriminator::LambdaParam;
use crate::gradient;
use crate::ntk::NtkConfig;
use crate::rows;
use crate::{Error, Result};

/// Loss above which generator training is considered divergent.
const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputActivation {
    #[default]
    Identity,
    /// `1 / (1 + e^-x)`, for pixel outputs in `[0, 1]`.
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// ReLU hidden layers, configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMlp {
    pub layers: Vec<DenseLayer>,
    pub output: OutputActivation,
}

/// Parameter gradients, shaped like [`GeneratorMlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrads {
    pub layers: Vec<DenseLayer>,
}

impl GeneratorGrads {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.norm_squared() + l.bias.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the latent batch.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<DMatrix<f64>>,
    out: DMatrix<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GeneratorMlp {
    /// He-initialized network with layer widths `dims = [latent, hidden.., out]`.
    pub fn new_random(dims: &[usize], output: OutputActivation, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!("invalid generator dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let scale = (2.0 / w[0] as f64).sqrt();
                let mut weights = DMatrix::zeros(w[1], w[0]);
                for i in 0..w[1] {
                    for j in 0..w[0] {
                        let e: f64 = rng.sample(StandardNormal);
                        weights[(i, j)] = scale * e;
                    }
                }
                DenseLayer {
                    weights,
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers, output })
    }

    /// Single linear layer `G(z) = z`.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![DenseLayer {
                weights: DMatrix::identity(dim, dim),
                bias: DVector::zeros(dim),
            }],
            output: OutputActivation::Identity,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("generator has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::InvalidConfig(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && l.weights.ncols() != self.layers[i - 1].weights.nrows() {
                return Err(Error::InvalidConfig(format!("layer {i}: input width mismatch")));
            }
            if !rows::all_finite(&l.weights) || !l.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("generator parameters"));
            }
        }
        Ok(())
    }

    fn forward_cached(&self, latent: &DMatrix<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = latent.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut a = &h * l.weights.transpose();
            for mut r in a.row_iter_mut() {
                r += l.bias.transpose();
            }
            let act = if i < last {
                a.map(|v| v.max(0.0))
            } else {
                match self.output {
                    OutputActivation::Identity => a.clone(),
                    OutputActivation::Logistic => a.map(logistic),
                }
            };
            inputs.push(h);
            pre.push(a);
            h = act;
        }
        ForwardCache { inputs, pre, out: h }
    }

    /// Generated rows for a batch of latent rows.
    pub fn forward(&self, latent: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cached(latent).out
    }

    fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> GeneratorGrads {
        let last = self.layers.len() - 1;
        let mut g = match self.output {
            OutputActivation::Identity => grad_out.clone(),
            OutputActivation::Logistic => grad_out.zip_map(&cache.out, |g, s| g * s * (1.0 - s)),
        };
        let mut grads = vec![None; self.layers.len()];
        for i in (0..=last).rev() {
            if i < last {
                g = g.zip_map(&cache.pre[i], |g, p| if p > 0.0 { g } else { 0.0 });
            }
            let weights = g.transpose() * &cache.inputs[i];
            let bias = DVector::from_fn(g.ncols(), |j, _| g.column(j).sum());
            let next = &g * &self.layers[i].weights;
            grads[i] = Some(DenseLayer { weights, bias });
            g = next;
        }
        GeneratorGrads {
            layers: grads.into_iter().map(|l| l.expect("every layer visited")).collect(),
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Loss on one batch and its gradient with respect to every generator
/// parameter.
pub fn generator_loss_and_grad(
    real_batch: &DMatrix<f64>,
    gen: &GeneratorMlp,
    latent: &DMatrix<f64>,
    cfg: &NtkConfig,
    lambda: f64,
) -> Result<(f64, GeneratorGrads)> {
    gen.validate()?;
    if latent.ncols() != gen.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.latent_dim(),
            got: latent.ncols(),
        });
    }
    let cache = gen.forward_cached(latent);
    let r = gradient::loss_and_grad(real_batch, &cache.out, cfg, lambda)?;
    Ok((r.loss, gen.backward(&cache, &r.grad)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRun {
    pub generator: GeneratorMlp,
    pub trace: Vec<TracePoint>,
}

/// Trains `gen` on batches of `batch / 2` real rows and `batch / 2` latent
/// draws. `opts.init` and `opts.clamp` do not apply.
pub fn train_generator(
    real: &DMatrix<f64>,
    gen: GeneratorMlp,
    cfg: &NtkConfig,
    lambda: LambdaParam,
    batch: usize,
    opts: &GdOptions,
) -> Result<GeneratorRun> {
    opts.validate()?;
    gen.validate()?;
    let lambda = LambdaParam::new(lambda.value())?.value();
    let n = real.nrows();
    if gen.output_dim() != real.ncols() {
        return Err(Error::DimensionMismatch {
            expected: real.ncols(),
            got: gen.output_dim(),
        });
    }
    if batch % 2 != 0 || batch < 2 || batch > 2 * n {
        return Err(Error::InvalidConfig(format!(
            "batch must be even and in [2, {}], got {batch}",
            2 * n
        )));
    }
    let half = batch / 2;
    let l = gen.latent_dim();
    let mut gen = gen;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = OptState::new(opts.optimizer, opts.step_size, gen.num_params());
    let mut trace = Vec::new();
    let mut min_sq = f64::INFINITY;
    for s in 0..=opts.max_iters {
        let xi = if half == n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, half).into_vec()
        };
        let xb = rows::select_rows(real, &xi);
        let mut latent = DMatrix::zeros(half, l);
        for i in 0..half {
            for j in 0..l {
                latent[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let abort = |reason: String, trace: &Vec<TracePoint>, gen: &GeneratorMlp| Error::Aborted {
            iter: s,
            reason,
            state: Box::new(SynthState {
                z: gen.forward(&latent),
                iter: s,
                trace: trace.clone(),
            }),
        };
        let (loss, grads) = match generator_loss_and_grad(&xb, &gen, &latent, cfg, lambda) {
            Ok(v) => v,
            Err(err @ Error::NonFinite(_)) => return Err(abort(err.to_string(), &trace, &gen)),
            Err(err) => return Err(err),
        };
        let grad_norm = grads.norm();
        if !loss.is_finite() || loss > DIVERGENCE_LOSS || !grad_norm.is_finite() {
            return Err(abort(format!("diverged (loss {loss})"), &trace, &gen));
        }
        min_sq = min_sq.min(grad_norm * grad_norm);
        if s % opts.record_every == 0 || s == opts.max_iters {
            trace.push(TracePoint {
                iter: s,
                loss,
                grad_norm,
                min_grad_sq: min_sq,
            });
        }
        if s == opts.max_iters {
            break;
        }
        opt.begin_step();
        let flat = grads
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied());
        for (slot, (p, g)) in gen.params_mut().zip(flat).enumerate() {
            opt.apply(slot, p, g);
        }
    }
    Ok(GeneratorRun { generator: gen, trace })
}
