//! Datasets: Gaussian-mixture toys, MNIST IDX files, row normalization.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Isotropic Gaussian mixture in the plane with uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub centers: Vec<[f64; 2]>,
    pub sigma: f64,
}

impl GmmSpec {
    pub fn new(centers: Vec<[f64; 2]>, sigma: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Empty("mixture centers"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(Self { centers, sigma })
    }

    /// 5x5 lattice centered at the origin, spacing 2, sigma 0.05.
    pub fn grid25() -> Self {
        let centers = (0..25)
            .map(|i| [2.0 * (i / 5) as f64 - 4.0, 2.0 * (i % 5) as f64 - 4.0])
            .collect();
        Self { centers, sigma: 0.05 }
    }

    /// Eight modes on a circle of radius 2, sigma 0.02.
    pub fn ring8() -> Self {
        let centers = (0..8)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 8.0;
                [2.0 * a.cos(), 2.0 * a.sin()]
            })
            .collect();
        Self { centers, sigma: 0.02 }
    }

    /// Index of the nearest center and the distance to it.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Gmm,
    MnistIdx,
    Raw,
}

/// Rows are points. Image datasets carry their `(height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: DMatrix<f64>,
    pub source: DataSource,
    pub normalized: bool,
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn raw(rows: DMatrix<f64>) -> Self {
        Self {
            rows,
            source: DataSource::Raw,
            normalized: false,
            image_shape: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// `n` i.i.d. draws from the mixture.
pub fn sample_gmm(spec: &GmmSpec, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = DMatrix::zeros(n, 2);
    for i in 0..n {
        let c = spec.centers[rng.gen_range(0..spec.centers.len())];
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        rows[(i, 0)] = c[0] + spec.sigma * dx;
        rows[(i, 1)] = c[1] + spec.sigma * dy;
    }
    Dataset {
        rows,
        source: DataSource::Gmm,
        normalized: false,
        image_shape: None,
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("{what}: header truncated")))
}

/// Parsed IDX image file: `(count, height, width, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Idx(format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "images")? as usize;
    let h = read_u32(bytes, 8, "images")? as usize;
    let w = read_u32(bytes, 12, "images")? as usize;
    let need = count * h * w;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Idx(format!(
            "image payload truncated: {} bytes, expected {need}",
            payload.len()
        )));
    }
    Ok((count, h, w, &payload[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Idx(format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Idx(format!(
            "label payload truncated: {} bytes, expected {count}",
            payload.len()
        )));
    }
    Ok(&payload[..count])
}

/// Loads the first `count` images (after the optional class filter) as rows
/// scaled to `[0, 1]`.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: Option<&Path>,
    count: usize,
    class_filter: Option<&[u8]>,
) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)?;
    let (available, h, w, pixels) = parse_idx_images(&image_bytes)?;
    let label_bytes = labels_path.map(std::fs::read).transpose()?;
    let labels = label_bytes.as_deref().map(parse_idx_labels).transpose()?;
    if let Some(l) = labels {
        if l.len() != available {
            return Err(Error::Idx(format!("{} labels for {available} images", l.len())));
        }
    }
    let selected: Vec<usize> = match class_filter {
        None => (0..available).collect(),
        Some(classes) => {
            let l = labels.ok_or_else(|| Error::Idx("class filter requires a label file".into()))?;
            (0..available).filter(|&i| classes.contains(&l[i])).collect()
        }
    };
    if count > selected.len() {
        return Err(Error::Idx(format!(
            "requested {count} images but only {} available",
            selected.len()
        )));
    }
    let d = h * w;
    let mut rows = DMatrix::zeros(count, d);
    for (r, &i) in selected[..count].iter().enumerate() {
        for (c, &px) in pixels[i * d..(i + 1) * d].iter().enumerate() {
            rows[(r, c)] = px as f64 / 255.0;
        }
    }
    Ok(Dataset {
        rows,
        source: DataSource::MnistIdx,
        normalized: false,
        image_shape: Some((h, w)),
    })
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(ds: &Dataset) -> Result<Dataset> {
    let mut rows = ds.rows.clone();
    for i in 0..rows.nrows() {
        let norm = rows.row(i).norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroRow(i));
        }
        rows.row_mut(i).unscale_mut(norm);
    }
    Ok(Dataset {
        rows,
        normalized: true,
        ..ds.clone()
    })
}
