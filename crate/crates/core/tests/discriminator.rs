use gantk::discriminator::{predict, search_lambda, train_error, uniform_box_noise};
use gantk::matfun::sym_eig;
use gantk::ntk::kernel_matrix;
use gantk::{Error, LambdaParam, NtkConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normalized(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
    for mut r in m.row_iter_mut() {
        let norm = r.norm();
        r /= norm;
    }
    m
}

fn lam(v: f64) -> LambdaParam {
    LambdaParam::new(v).unwrap()
}

#[test]
fn small_lambda_predicts_zero() {
    let (x, z) = (normalized(1, 4, 3), normalized(2, 4, 3));
    let d = predict(&x, &z, &NtkConfig::default(), lam(1e-12)).unwrap();
    assert!(d.amax() < 1e-9, "{}", d.amax());
}

#[test]
fn large_lambda_recovers_labels() {
    let (x, z) = (normalized(3, 4, 3), normalized(4, 4, 3));
    let cfg = NtkConfig::default();
    let stacked = gantk::LabeledStack::new(&x, &z).unwrap();
    let eig = sym_eig(&kernel_matrix(&stacked.rows, &cfg).unwrap()).unwrap();
    let mu_min = eig.min_eigval();
    assert!(mu_min > 0.0);
    // exp(-lambda * mu_min) < 1e-6
    let lambda = 6.0 * 10f64.ln() / mu_min * 1.01;
    let d = predict(&x, &z, &cfg, lam(lambda)).unwrap();
    let y = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!((d - y).amax() < 1e-5);
}

#[test]
fn predictions_are_permutation_equivariant() {
    let (x, z) = (normalized(5, 5, 2), normalized(6, 5, 2));
    let cfg = NtkConfig::default();
    let base = predict(&x, &z, &cfg, lam(4.0)).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let xp = DMatrix::from_fn(5, 2, |i, j| x[(perm[i], j)]);
    let zp = DMatrix::from_fn(5, 2, |i, j| z[(perm[i], j)]);
    let moved = predict(&xp, &zp, &cfg, lam(4.0)).unwrap();
    for i in 0..5 {
        assert!((moved[i] - base[perm[i]]).abs() < 1e-10);
        assert!((moved[5 + i] - base[5 + perm[i]]).abs() < 1e-10);
    }
}

#[test]
fn prediction_is_linear_in_the_labels() {
    // D(y) = (I - E) y, so D(1 ⊕ 0) + D(0 ⊕ 1) = (I - E) 1
    let (x, z) = (normalized(7, 4, 3), normalized(8, 4, 3));
    let cfg = NtkConfig::default();
    let d_xz = predict(&x, &z, &cfg, lam(3.0)).unwrap();
    let d_zx = predict(&z, &x, &cfg, lam(3.0)).unwrap();
    let stacked = gantk::LabeledStack::new(&x, &z).unwrap();
    let eig = sym_eig(&kernel_matrix(&stacked.rows, &cfg).unwrap()).unwrap();
    let ones = DVector::from_element(8, 1.0);
    let total = &ones - gantk::matfun::expm_neg(&eig, 3.0) * &ones;
    for i in 0..4 {
        assert!((d_xz[i] + d_zx[4 + i] - total[i]).abs() < 1e-10);
        assert!((d_xz[4 + i] + d_zx[i] - total[4 + i]).abs() < 1e-10);
    }
}

#[test]
fn train_error_is_non_increasing_in_lambda() {
    let (x, z) = (normalized(9, 6, 3), normalized(10, 6, 3));
    let cfg = NtkConfig::default();
    let mut prev = f64::INFINITY;
    for k in 0..20 {
        let e = train_error(&x, &z, &cfg, lam(2f64.powi(k))).unwrap();
        assert!(e <= prev + 1e-15, "lambda 2^{k}: {e} > {prev}");
        prev = e;
    }
}

#[test]
fn search_is_deterministic_and_returns_a_power_of_two() {
    let x = normalized(11, 12, 3);
    let cfg = NtkConfig::default();
    let a = search_lambda(&x, &cfg, 1e-2, 5).unwrap();
    let b = search_lambda(&x, &cfg, 1e-2, 5).unwrap();
    assert_eq!(a, b);
    let l = a.lambda.value();
    assert_eq!(l, 2f64.powi(l.log2().round() as i32));
    assert!(a.train_error <= 1e-2);
}

#[test]
fn tighter_epsilon_never_lowers_lambda() {
    let x = normalized(12, 10, 3);
    let cfg = NtkConfig::default();
    let mut prev = 0.0;
    for eps in [0.4, 0.2, 0.1, 1e-2, 1e-3, 1e-4] {
        let l = search_lambda(&x, &cfg, eps, 1).unwrap().lambda.value();
        assert!(l >= prev);
        prev = l;
    }
}

#[test]
fn noise_stays_in_the_data_box() {
    let x = normalized(13, 20, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = uniform_box_noise(&x, 50, &mut rng);
    for j in 0..4 {
        let (lo, hi) = (x.column(j).min(), x.column(j).max());
        assert!(z.column(j).iter().all(|&v| v >= lo && v <= hi));
    }
}

#[test]
fn constant_data_cannot_be_separated() {
    // box noise on constant data equals the data, so the kernel is singular
    let x = DMatrix::from_element(3, 2, 0.5);
    let r = search_lambda(&x, &NtkConfig::default(), 1e-2, 0);
    assert!(matches!(r, Err(Error::SeparationFailed { .. })));
}

#[test]
fn linear_kernel_failure_reports_a_finite_error() {
    // a depth-one kernel is linear, rank d + 1, and cannot fit 2n labels
    let x = gantk::data::sample_gmm(&gantk::GmmSpec::ring8(), 64, 0).rows;
    match search_lambda(&x, &NtkConfig::relu(1, 2.0, 1.0), 1e-2, 0) {
        Err(Error::SeparationFailed { train_error }) => assert!(train_error.is_finite() && train_error > 1e-2),
        other => panic!("expected a separation failure, got {other:?}"),
    }
}
