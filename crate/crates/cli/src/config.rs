//! Run configuration: one flat JSON document, overridable from the command
//! line.

use std::path::{Path, PathBuf};

use gantk::synthesis::OutputActivation;
use gantk::{Activation, GdOptions, Init, NtkConfig, Optimizer};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// 5 x 5 grid of Gaussians.
    #[default]
    Grid25,
    /// 8 Gaussians on a circle.
    Ring8,
    Mnist,
}

impl DatasetKind {
    pub fn gmm_spec(self) -> Option<gantk::GmmSpec> {
        match self {
            DatasetKind::Grid25 => Some(gantk::GmmSpec::grid25()),
            DatasetKind::Ring8 => Some(gantk::GmmSpec::ring8()),
            DatasetKind::Mnist => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    Batch,
    Generator,
    Multires,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Batch => "batch",
            Variant::Generator => "generator",
            Variant::Multires => "multires",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    #[default]
    Relu,
    Erf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    #[default]
    Gd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    #[default]
    UniformBox,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    AmSsim,
    Wasserstein,
    Modes,
}

/// Every parameter of every command. Keys not listed here are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Number of real rows.
    pub n: usize,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    /// Keep only these digit classes (needs `mnist_labels`).
    pub classes: Option<Vec<u8>>,
    /// Scale every real row to unit norm.
    pub normalize: bool,

    pub depth: usize,
    pub weight_var: f64,
    /// Defaults to 1.0 for the Gaussian-mixture toys and 0.01 for images.
    pub bias_var: Option<f64>,
    pub activation: ActivationName,

    /// Fixed discriminator strength; searched when absent.
    pub lambda: Option<f64>,
    pub epsilon: f64,

    pub variant: Variant,
    pub step_size: f64,
    pub max_iters: usize,
    pub optimizer: OptimizerName,
    pub record_every: usize,
    pub init: InitName,
    pub clamp: Option<[f64; 2]>,
    /// Batch size `b` for the batch and generator variants; defaults to `2n`.
    pub batch: Option<usize>,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub pool_factors: Vec<usize>,

    /// Inputs of the `metrics` command: a points CSV or a directory of PGM
    /// images.
    pub generated: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Metrics to compute; inferred from the inputs when empty.
    pub metrics: Vec<MetricName>,
    pub radius_sigmas: f64,

    pub seed: u64,
    pub out: PathBuf,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Grid25,
            n: 256,
            mnist_images: None,
            mnist_labels: None,
            classes: None,
            normalize: false,
            depth: 3,
            weight_var: 2.0,
            bias_var: None,
            activation: ActivationName::Relu,
            lambda: None,
            epsilon: 1e-2,
            variant: Variant::Full,
            step_size: 0.01,
            max_iters: 1000,
            optimizer: OptimizerName::Gd,
            record_every: 1,
            init: InitName::UniformBox,
            clamp: None,
            batch: None,
            hidden: vec![32, 32],
            latent_dim: 2,
            pool_factors: vec![1, 2],
            generated: None,
            reference: None,
            metrics: Vec::new(),
            radius_sigmas: 3.0,
            seed: 0,
            out: PathBuf::from("out"),
            runs: 1,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub runs: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (or starts from the defaults) and applies `over`.
    pub fn load(path: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Path(p.to_path_buf(), e.to_string()))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = over.seed {
            cfg.seed = s;
        }
        if let Some(o) = &over.out {
            cfg.out = o.clone();
        }
        if let Some(v) = over.variant {
            cfg.variant = v;
        }
        if let Some(r) = over.runs {
            cfg.runs = r;
        }
        Ok(cfg)
    }

    pub fn bias_var(&self) -> f64 {
        self.bias_var.unwrap_or(match self.dataset {
            DatasetKind::Mnist => NtkConfig::default().bias_var,
            _ => 1.0,
        })
    }

    pub fn ntk(&self) -> NtkConfig {
        NtkConfig {
            depth: self.depth,
            weight_var: self.weight_var,
            bias_var: self.bias_var(),
            activation: match self.activation {
                ActivationName::Relu => Activation::Relu,
                ActivationName::Erf => Activation::Erf,
            },
        }
    }

    pub fn gd_options(&self, seed: u64) -> GdOptions {
        GdOptions {
            step_size: self.step_size,
            max_iters: self.max_iters,
            optimizer: match self.optimizer {
                OptimizerName::Gd => Optimizer::PlainGd,
                OptimizerName::Adam => Optimizer::adam(),
            },
            record_every: self.record_every,
            seed,
            init: match self.init {
                InitName::UniformBox => Init::UniformDataBox,
                InitName::Gaussian => Init::GaussianStd,
            },
            clamp: self.clamp.map(|[lo, hi]| (lo, hi)),
        }
    }

    pub fn output_activation(&self) -> OutputActivation {
        match self.dataset {
            DatasetKind::Mnist => OutputActivation::Logistic,
            _ => OutputActivation::Identity,
        }
    }

    /// Checks everything that can be checked without touching the data, and
    /// that every input path exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if !(self.weight_var.is_finite() && self.weight_var > 0.0) {
            return bad(format!("weight_var must be > 0, got {}", self.weight_var));
        }
        let sb2 = self.bias_var();
        if !(sb2.is_finite() && sb2 >= 0.0) {
            return bad(format!("bias_var must be >= 0, got {sb2}"));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("lambda must be > 0, got {l}"));
            }
        }
        if !(self.radius_sigmas.is_finite() && self.radius_sigmas > 0.0) {
            return bad(format!("radius_sigmas must be > 0, got {}", self.radius_sigmas));
        }
        if self.variant == Variant::Generator && self.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        if self.variant == Variant::Multires {
            if self.dataset != DatasetKind::Mnist {
                return bad("the multires variant needs an image dataset".into());
            }
            if self.pool_factors.is_empty() || self.pool_factors.contains(&0) {
                return bad(format!("invalid pool_factors {:?}", self.pool_factors));
            }
        }
        if self.dataset == DatasetKind::Mnist {
            match &self.mnist_images {
                None => return bad("dataset \"mnist\" needs mnist_images".into()),
                Some(p) => check_exists(p)?,
            }
        }
        if self.classes.is_some() && self.mnist_labels.is_none() {
            return bad("classes needs mnist_labels".into());
        }
        for p in [&self.mnist_labels, &self.generated, &self.reference].into_iter().flatten() {
            check_exists(p)?;
        }
        Ok(())
    }
}

fn check_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Path(p.to_path_buf(), "no such file or directory".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"stepsize": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("stepsize"), "{err}");
    }

    #[test]
    fn enums_use_lowercase_names() {
        let c = RunConfig::from_json(r#"{"dataset": "ring8", "variant": "multires", "init": "gaussian", "metrics": ["am_ssim"]}"#)
            .unwrap();
        assert_eq!(c.dataset, DatasetKind::Ring8);
        assert_eq!(c.variant, Variant::Multires);
        assert_eq!(c.init, InitName::Gaussian);
        assert_eq!(c.metrics, vec![MetricName::AmSsim]);
    }

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 4, "runs": 2, "variant": "batch"}"#).unwrap();
        let over = Overrides {
            seed: Some(9),
            variant: Some(Variant::Full),
            ..Overrides::default()
        };
        let c = RunConfig::load(Some(&path), &over).unwrap();
        assert_eq!((c.seed, c.runs, c.variant), (9, 2, Variant::Full));
    }

    #[test]
    fn validation_catches_bad_values_and_paths() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        assert!(RunConfig { n: 1, ..ok.clone() }.validate().is_err());
        assert!(RunConfig { lambda: Some(-1.0), ..ok.clone() }.validate().is_err());
        assert!(RunConfig {
            dataset: DatasetKind::Mnist,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            generated: Some("/definitely/not/here.csv".into()),
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            variant: Variant::Multires,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn bias_default_depends_on_the_dataset() {
        let toy = RunConfig::default();
        assert_eq!(toy.bias_var(), 1.0);
        let img = RunConfig {
            dataset: DatasetKind::Mnist,
            ..toy
        };
        assert_eq!(img.bias_var(), 0.01);
    }
}
