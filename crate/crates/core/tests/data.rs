use std::io::Write;
use std::path::{Path, PathBuf};

use gantk::data::{load_mnist_idx, normalize_rows, parse_idx_images, sample_gmm};
use gantk::{Dataset, Error, GmmSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn images() -> PathBuf {
    fixture("mnist-sample-images-idx3-ubyte")
}

fn labels() -> PathBuf {
    fixture("mnist-sample-labels-idx1-ubyte")
}

fn reference_idx(path: &Path) -> (Vec<u32>, Vec<u8>) {
    gantk_oracles::idx::read(path)
}

#[test]
fn first_64_rows_match_reference_parser() {
    let ds = load_mnist_idx(&images(), None, 64, None).unwrap();
    assert_eq!(ds.rows.shape(), (64, 784));
    assert_eq!(ds.image_shape, Some((28, 28)));
    assert!(ds.rows.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let (dims, payload) = reference_idx(&images());
    assert_eq!(dims, vec![256, 28, 28]);
    for r in 0..64 {
        let want: u64 = payload[r * 784..(r + 1) * 784].iter().map(|&b| b as u64).sum();
        let got: f64 = ds.rows.row(r).iter().map(|v| (v * 255.0).round()).sum();
        assert_eq!(got as u64, want, "row {r} checksum");
    }
    let first: u64 = payload[..784].iter().map(|&b| b as u64).sum();
    assert_eq!(first, 31095);
}

#[test]
fn class_filter_selects_matching_labels() {
    let (_, label_bytes) = reference_idx(&labels());
    let ds = load_mnist_idx(&images(), Some(&labels()), 10, Some(&[3])).unwrap();
    let (_, payload) = reference_idx(&images());
    let threes: Vec<usize> = (0..label_bytes.len()).filter(|&i| label_bytes[i] == 3).take(10).collect();
    for (r, &i) in threes.iter().enumerate() {
        for c in 0..784 {
            assert_eq!(ds.rows[(r, c)], payload[i * 784 + c] as f64 / 255.0);
        }
    }
}

#[test]
fn count_zero_is_an_empty_dataset() {
    let ds = load_mnist_idx(&images(), None, 0, None).unwrap();
    assert!(ds.is_empty());
    assert_eq!(ds.dim(), 784);
}

#[test]
fn too_many_rows_is_an_error() {
    assert!(matches!(load_mnist_idx(&images(), None, 257, None), Err(Error::Idx(_))));
}

fn write_temp(bytes: &[u8]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(bytes).unwrap();
    f
}

fn idx_header(count: u32) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for v in [count, 28, 28] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b
}

#[test]
fn single_zero_image_file() {
    let mut bytes = idx_header(1);
    bytes.extend(std::iter::repeat(0u8).take(784));
    let f = write_temp(&bytes);
    let ds = load_mnist_idx(f.path(), None, 1, None).unwrap();
    assert_eq!(ds.rows, DMatrix::zeros(1, 784));
    assert!(matches!(normalize_rows(&ds), Err(Error::ZeroRow(0))));
}

#[test]
fn malformed_files_fail_loudly() {
    let mut bad_magic = idx_header(1);
    bad_magic[3] = 1;
    bad_magic.extend(std::iter::repeat(0u8).take(784));
    assert!(parse_idx_images(&bad_magic).is_err());
    let mut truncated = idx_header(2);
    truncated.extend(std::iter::repeat(0u8).take(784 + 10));
    assert!(matches!(parse_idx_images(&truncated), Err(Error::Idx(_))));
    assert!(parse_idx_images(&[0, 0, 8]).is_err());
}

#[test]
fn normalize_examples() {
    let ds = Dataset::raw(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]));
    let n = normalize_rows(&ds).unwrap();
    assert!((n.rows[(0, 0)] - 0.6).abs() < 1e-15 && (n.rows[(0, 1)] - 0.8).abs() < 1e-15);
    assert!(n.normalized);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ds = Dataset::raw(DMatrix::from_fn(16, 8, |_, _| rng.gen_range(-5.0..5.0)));
    let once = normalize_rows(&ds).unwrap();
    for r in once.rows.row_iter() {
        assert!((r.norm() - 1.0).abs() < 1e-12);
    }
    let twice = normalize_rows(&once).unwrap();
    assert!((twice.rows - &once.rows).amax() < 1e-15);
}

#[test]
fn grid_samples_stay_near_their_modes() {
    let spec = GmmSpec::grid25();
    assert_eq!(spec.centers.len(), 25);
    let ds = sample_gmm(&spec, 256, 0);
    let mut counts = vec![0usize; 25];
    for r in ds.rows.row_iter() {
        let (idx, dist) = spec.nearest([r[0], r[1]]);
        assert!(dist < 5.0 * spec.sigma);
        counts[idx] += 1;
    }
    // binomial(256, 1/25): mean 10.24, sd ~3.14
    let mean = 256.0 / 25.0;
    let sd = (256.0f64 * (1.0 / 25.0) * (24.0 / 25.0)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - mean).abs() <= 4.0 * sd), "{counts:?}");
}

#[test]
fn single_centre_sample_mean() {
    let spec = GmmSpec::new(vec![[1.0, -2.0]], 0.3).unwrap();
    let n = 4000;
    let ds = sample_gmm(&spec, n, 9);
    let bound = 5.0 * 0.3 / (n as f64).sqrt();
    assert!((ds.rows.column(0).mean() - 1.0).abs() < bound);
    assert!((ds.rows.column(1).mean() + 2.0).abs() < bound);
}

#[test]
fn ring_has_eight_modes_at_radius_two() {
    let spec = GmmSpec::ring8();
    assert_eq!(spec.centers.len(), 8);
    for c in &spec.centers {
        assert!(((c[0] * c[0] + c[1] * c[1]).sqrt() - 2.0).abs() < 1e-12);
    }
    assert!(GmmSpec::new(vec![], 0.1).is_err());
    assert!(GmmSpec::new(vec![[0.0, 0.0]], 0.0).is_err());
}
