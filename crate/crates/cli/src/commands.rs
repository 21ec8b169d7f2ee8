//! The four subcommands. Each writes its artifacts under `RunConfig::out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gantk::data::{load_mnist_idx, normalize_rows, sample_gmm};
use gantk::discriminator::search_lambda;
use gantk::metrics::{am_ssim, images_from_rows, mode_coverage, wasserstein_2d, SsimOptions};
use gantk::synthesis::{synthesize_batchwise, synthesize_full, synthesize_multires, train_generator, TracePoint};
use gantk::{Dataset, GeneratorMlp, LambdaParam, ResolutionLevel, SynthState};
use log::{info, warn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{DatasetKind, MetricName, RunConfig, Variant};
use crate::output;
use crate::{CliError, Result};

/// Offsets that turn a run seed into the seeds of independent draws.
const FRESH_SAMPLE_OFFSET: u64 = 10_000;
const BASELINE_SAMPLE_OFFSET: u64 = 20_000;
const LATENT_OFFSET: u64 = 30_000;

pub const FID_NOTICE: &str =
    "note: FID is not computed (it needs a pretrained Inception network); use am_ssim, wasserstein and modes_hit";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Path(dir.to_path_buf(), e.to_string()))
}

/// Real rows for a run.
pub fn load_real(cfg: &RunConfig, seed: u64) -> Result<Dataset> {
    let ds = match cfg.dataset.gmm_spec() {
        Some(spec) => sample_gmm(&spec, cfg.n, seed),
        None => {
            let images = cfg.mnist_images.as_deref().ok_or_else(|| CliError::Config("missing mnist_images".into()))?;
            load_mnist_idx(images, cfg.mnist_labels.as_deref(), cfg.n, cfg.classes.as_deref())?
        }
    };
    Ok(if cfg.normalize { normalize_rows(&ds)? } else { ds })
}

/// Discriminator strength and, when searched, the train error it reached.
fn resolve_lambda(cfg: &RunConfig, real: &DMatrix<f64>, seed: u64) -> Result<(LambdaParam, Option<f64>)> {
    match cfg.lambda {
        Some(l) => Ok((LambdaParam::new(l)?, None)),
        None => {
            let s = search_lambda(real, &cfg.ntk(), cfg.epsilon, seed)?;
            info!("lambda search: lambda {} train error {:.3e}", s.lambda.value(), s.train_error);
            Ok((s.lambda, Some(s.train_error)))
        }
    }
}

fn batch_size(cfg: &RunConfig) -> usize {
    cfg.batch.unwrap_or(2 * cfg.n)
}

#[derive(Debug, Serialize)]
struct LambdaReport {
    lambda: f64,
    epsilon: f64,
    train_error: f64,
    seed: u64,
}

pub fn cmd_lambda_search(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let real = load_real(cfg, cfg.seed)?;
    let s = search_lambda(&real.rows, &cfg.ntk(), cfg.epsilon, cfg.seed)?;
    create_dir(&cfg.out)?;
    output::write_json(
        &cfg.out.join("lambda.json"),
        &LambdaReport {
            lambda: s.lambda.value(),
            epsilon: cfg.epsilon,
            train_error: s.train_error,
            seed: cfg.seed,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub variant: &'static str,
    pub seed: u64,
    /// One entry per resolution level for the multires variant.
    pub lambdas: Vec<f64>,
    pub lambda_train_error: Option<f64>,
    pub iterations: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub wall_time_s: f64,
    pub aborted: Option<String>,
}

/// Everything one synthesis run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub real: Dataset,
    /// Generated rows: the optimized `Z`, or generator samples.
    pub generated: DMatrix<f64>,
    pub trace: Vec<TracePoint>,
    pub report: SynthReport,
}

/// Runs one seed of `synth` without writing anything. A run that aborted
/// mid-way still returns its partial trace, with `report.aborted` set.
pub fn run_synthesis(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    let start = Instant::now();
    let real = load_real(cfg, seed)?;
    let ntk = cfg.ntk();
    let opts = cfg.gd_options(seed);
    // the batch-wise objectives see b/2 real rows at a time, so lambda is
    // searched at that size
    let search_rows = match cfg.variant {
        Variant::Batch | Variant::Generator => (batch_size(cfg) / 2).clamp(2, cfg.n),
        _ => cfg.n,
    };
    let search_set = real.rows.rows(0, search_rows).into_owned();
    let (lambda, train_error) = match cfg.variant {
        Variant::Multires => (None, None),
        _ => {
            let (l, e) = resolve_lambda(cfg, &search_set, seed)?;
            (Some(l), e)
        }
    };
    let mut lambdas: Vec<f64> = lambda.iter().map(|l| l.value()).collect();
    let result: gantk::Result<SynthState> = match cfg.variant {
        Variant::Full => synthesize_full(&real.rows, &ntk, single(lambda), &opts),
        Variant::Batch => synthesize_batchwise(&real.rows, &ntk, single(lambda), batch_size(cfg), &opts),
        Variant::Multires => {
            let shape = real
                .image_shape
                .ok_or_else(|| CliError::Config("the multires variant needs an image dataset".into()))?;
            let mut levels = Vec::new();
            for &f in &cfg.pool_factors {
                let pooled = gantk::synthesis::avg_pool_rows(&real.rows, shape, f)?;
                let (lam, _) = resolve_lambda(cfg, &pooled, seed)?;
                lambdas.push(lam.value());
                levels.push(ResolutionLevel {
                    pool_factor: f,
                    cfg: ntk,
                    lambda: lam,
                });
            }
            synthesize_multires(&real.rows, shape, &levels, &opts)
        }
        Variant::Generator => {
            let mut dims = vec![cfg.latent_dim];
            dims.extend(&cfg.hidden);
            dims.push(real.dim());
            let gen = GeneratorMlp::new_random(&dims, cfg.output_activation(), seed)?;
            train_generator(&real.rows, gen, &ntk, single(lambda), batch_size(cfg), &opts).map(|run| {
                let latent = latent_draws(cfg.n, cfg.latent_dim, seed);
                SynthState {
                    z: run.generator.forward(&latent),
                    iter: cfg.max_iters,
                    trace: run.trace,
                }
            })
        }
    };
    let (state, aborted) = match result {
        Ok(s) => (s, None),
        Err(gantk::Error::Aborted { iter, reason, state }) => {
            warn!("seed {seed}: aborted at iteration {iter}: {reason}");
            (*state, Some(format!("iteration {iter}: {reason}")))
        }
        Err(e) => return Err(e.into()),
    };
    let report = SynthReport {
        variant: cfg.variant.name(),
        seed,
        lambdas,
        lambda_train_error: train_error,
        iterations: state.iter,
        initial_loss: state.initial_loss(),
        final_loss: state.final_loss(),
        wall_time_s: start.elapsed().as_secs_f64(),
        aborted,
    };
    Ok(RunOutcome {
        real,
        generated: state.z,
        trace: state.trace,
        report,
    })
}

fn single(lambda: Option<LambdaParam>) -> LambdaParam {
    lambda.expect("single-level variants resolve lambda up front")
}

/// Latent inputs used to sample a trained generator.
pub fn latent_draws(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + LATENT_OFFSET);
    let mut out = DMatrix::zeros(n, dim);
    for i in 0..n {
        for j in 0..dim {
            out[(i, j)] = rng.sample(StandardNormal);
        }
    }
    out
}

fn write_outcome(dir: &Path, out: &RunOutcome) -> Result<()> {
    create_dir(dir)?;
    output::write_trace(&dir.join("trace.csv"), &out.trace)?;
    match out.real.image_shape {
        Some(shape) => output::write_images(&dir.join("images"), &out.generated, shape)?,
        None => {
            output::write_points(&dir.join("points.csv"), &out.generated)?;
            output::write_points(&dir.join("real.csv"), &out.real.rows)?;
        }
    }
    output::write_json(&dir.join("report.json"), &out.report)
}

fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    if cfg.runs == 1 {
        cfg.out.clone()
    } else {
        cfg.out.join(format!("seed-{seed}"))
    }
}

/// Executes `job` for seeds `seed .. seed + runs` on separate threads and
/// fails if any run failed.
fn for_each_seed<F>(cfg: &RunConfig, job: F) -> Result<()>
where
    F: Fn(u64) -> Result<()> + Sync,
{
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|k| cfg.seed + k).collect();
    let results: Vec<(u64, Result<()>)> = std::thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = seeds.iter().map(|&s| (s, scope.spawn(move || job(s)))).collect();
        handles
            .into_iter()
            .map(|(s, h)| (s, h.join().unwrap_or_else(|_| Err(CliError::Config(format!("run {s} panicked"))))))
            .collect()
    });
    let mut failed = 0;
    for (s, r) in results {
        if let Err(e) = r {
            log::error!("seed {s}: {e}");
            if cfg.runs == 1 {
                return Err(e);
            }
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::RunsFailed {
            failed,
            total: cfg.runs,
        });
    }
    Ok(())
}

fn synth_one(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    let out = run_synthesis(cfg, seed)?;
    write_outcome(&run_dir(cfg, seed), &out)?;
    info!(
        "seed {seed}: loss {:?} -> {:?} in {:.1}s",
        out.report.initial_loss, out.report.final_loss, out.report.wall_time_s
    );
    if let Some(reason) = &out.report.aborted {
        return Err(CliError::Aborted(reason.clone()));
    }
    Ok(out)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    for_each_seed(cfg, |seed| synth_one(cfg, seed).map(|_| ()))
}

#[derive(Debug, Default, Serialize, PartialEq)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub am_ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wasserstein: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes_hit: Option<usize>,
}

enum Loaded {
    Points(DMatrix<f64>),
    Images(DMatrix<f64>, (usize, usize)),
}

fn load_generated(path: &Path) -> Result<Loaded> {
    if path.is_dir() {
        let (rows, shape) = output::read_images(path)?;
        Ok(Loaded::Images(rows, shape))
    } else {
        Ok(Loaded::Points(output::read_points(path)?))
    }
}

/// Fresh draws from the configured mixture, independent of the training
/// rows of run `seed`.
pub fn fresh_gmm_sample(cfg: &RunConfig, m: usize, seed: u64) -> Option<DMatrix<f64>> {
    cfg.dataset
        .gmm_spec()
        .map(|spec| sample_gmm(&spec, m, seed + FRESH_SAMPLE_OFFSET).rows)
}

/// `wasserstein_2d` between two fresh, independent true samples of size `m`.
pub fn true_baseline(cfg: &RunConfig, m: usize, seed: u64) -> Option<Result<f64>> {
    let spec = cfg.dataset.gmm_spec()?;
    let a = sample_gmm(&spec, m, seed + FRESH_SAMPLE_OFFSET).rows;
    let b = sample_gmm(&spec, m, seed + BASELINE_SAMPLE_OFFSET).rows;
    Some(wasserstein_2d(&a, &b).map_err(CliError::from))
}

pub fn compute_metrics(cfg: &RunConfig) -> Result<MetricsReport> {
    let gen_path = cfg
        .generated
        .as_deref()
        .ok_or_else(|| CliError::Config("metrics needs \"generated\"".into()))?;
    let generated = load_generated(gen_path)?;
    let reference = cfg.reference.as_deref().map(load_generated).transpose()?;
    let mut wanted = cfg.metrics.clone();
    if wanted.is_empty() {
        wanted = match (&generated, cfg.dataset) {
            (Loaded::Images(..), _) => vec![MetricName::AmSsim],
            (Loaded::Points(_), DatasetKind::Mnist) => vec![MetricName::Wasserstein],
            (Loaded::Points(_), _) => vec![MetricName::Wasserstein, MetricName::Modes],
        };
    }
    let mut report = MetricsReport::default();
    for metric in wanted {
        match (metric, &generated) {
            (MetricName::AmSsim, Loaded::Images(rows, shape)) => {
                let data = match &reference {
                    Some(Loaded::Images(r, s)) if s == shape => r.clone(),
                    Some(_) => return Err(CliError::Config("reference must be images of the same size".into())),
                    None => load_real(cfg, cfg.seed)?.rows,
                };
                let gen_imgs = images_from_rows(rows, *shape)?;
                let data_imgs = images_from_rows(&data, *shape)?;
                report.am_ssim = Some(am_ssim(&gen_imgs, &data_imgs, &SsimOptions::default())?);
            }
            (MetricName::Wasserstein, Loaded::Points(p)) => {
                let reference = match &reference {
                    Some(Loaded::Points(r)) => r.clone(),
                    Some(_) => return Err(CliError::Config("reference must be a points file".into())),
                    None => fresh_gmm_sample(cfg, p.nrows(), cfg.seed)
                        .ok_or_else(|| CliError::Config("wasserstein needs a reference or a mixture dataset".into()))?,
                };
                report.wasserstein = Some(wasserstein_2d(p, &reference)?);
            }
            (MetricName::Modes, Loaded::Points(p)) => {
                let spec = cfg
                    .dataset
                    .gmm_spec()
                    .ok_or_else(|| CliError::Config("modes needs a mixture dataset".into()))?;
                report.modes_hit = Some(mode_coverage(p, &spec, cfg.radius_sigmas)?.modes_hit);
            }
            (m, _) => return Err(CliError::Config(format!("metric {m:?} does not apply to these inputs"))),
        }
    }
    Ok(report)
}

pub fn cmd_metrics(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    println!("{FID_NOTICE}");
    let report = compute_metrics(cfg)?;
    create_dir(&cfg.out)?;
    output::write_json(&cfg.out.join("metrics.json"), &report)
}

#[derive(Debug, Serialize)]
pub struct DemoReport {
    pub seed: u64,
    pub modes_hit: usize,
    pub modes_total: usize,
    pub per_mode_counts: Vec<usize>,
    pub wasserstein: f64,
    pub wasserstein_true_baseline: f64,
}

/// Synthesis on a mixture toy followed by its coverage and transport
/// metrics.
pub fn demo_one(cfg: &RunConfig, seed: u64) -> Result<DemoReport> {
    let spec = cfg
        .dataset
        .gmm_spec()
        .ok_or_else(|| CliError::Config("gmm-demo needs dataset grid25 or ring8".into()))?;
    let out = synth_one(cfg, seed)?;
    let modes = mode_coverage(&out.generated, &spec, cfg.radius_sigmas)?;
    let m = out.generated.nrows();
    let fresh = fresh_gmm_sample(cfg, m, seed).expect("mixture dataset");
    let report = DemoReport {
        seed,
        modes_hit: modes.modes_hit,
        modes_total: spec.centers.len(),
        per_mode_counts: modes.per_mode_counts,
        wasserstein: wasserstein_2d(&out.generated, &fresh)?,
        wasserstein_true_baseline: true_baseline(cfg, m, seed).expect("mixture dataset")?,
    };
    info!(
        "seed {seed}: {}/{} modes, wasserstein {:.4} (true baseline {:.4})",
        report.modes_hit, report.modes_total, report.wasserstein, report.wasserstein_true_baseline
    );
    output::write_json(&run_dir(cfg, seed).join("demo.json"), &report)?;
    Ok(report)
}

pub fn cmd_gmm_demo(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    println!("{FID_NOTICE}");
    for_each_seed(cfg, |seed| demo_one(cfg, seed).map(|_| ()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_draws_are_seeded() {
        let a = latent_draws(50, 3, 1);
        assert_eq!(a, latent_draws(50, 3, 1));
        assert_ne!(a, latent_draws(50, 3, 2));
        let mean = a.mean();
        assert!(mean.abs() < 0.5);
    }

    #[test]
    fn baseline_is_positive_and_seeded() {
        let cfg = RunConfig {
            dataset: DatasetKind::Ring8,
            ..RunConfig::default()
        };
        let a = true_baseline(&cfg, 64, 3).unwrap().unwrap();
        assert!(a > 0.0);
        assert_eq!(a, true_baseline(&cfg, 64, 3).unwrap().unwrap());
        let img = RunConfig {
            dataset: DatasetKind::Mnist,
            ..cfg
        };
        assert!(true_baseline(&img, 64, 3).is_none());
    }
}
