use gantk::ntk::{kernel_matrix, nngp_step, ntk_pair, sigma_dot, sigma_dot_for};
use gantk::{Activation, CovTriple, NtkConfig};
use gantk_oracles::kernel;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MC_SAMPLES: usize = 10_000_000;

fn random_triple(rng: &mut ChaCha8Rng) -> CovTriple {
    let a: f64 = rng.gen_range(0.2..3.0);
    let b: f64 = rng.gen_range(0.2..3.0);
    let rho: f64 = rng.gen_range(-0.3..0.95);
    CovTriple::new(a, rho * (a * b).sqrt(), b)
}

#[test]
fn layer_expectations_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let relu = NtkConfig::relu(2, 1.0, 0.0);
    let erf = NtkConfig {
        activation: Activation::Erf,
        ..relu
    };
    let rel = |est: f64, mc: f64| (est - mc).abs() / mc.abs();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = random_triple(&mut rng);
        let mc = kernel::monte_carlo(t.cov_xx, t.cov_xy, t.cov_yy, MC_SAMPLES, &mut rng);
        // with sw2 = 1 and sb2 = 0 the next cross entry is the expectation itself
        let checks = [
            (nngp_step(t, &relu).cov_xy, mc.relu_j),
            (sigma_dot(t), mc.relu_s),
            (nngp_step(t, &erf).cov_xy, mc.erf_j),
            (sigma_dot_for(t, Activation::Erf), mc.erf_s),
        ];
        for (est, mc) in checks {
            let e = rel(est, mc);
            assert!(e < 1e-3, "triple {t:?}: closed form {est} vs Monte Carlo {mc} (rel {e})");
            worst = worst.max(e);
        }
    }
    eprintln!("worst relative Monte Carlo error {worst:.3e}");
}

#[test]
fn ntk_pair_matches_unrolled_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let d = rng.gen_range(1..10);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let depth = rng.gen_range(1..6);
        let sw2 = rng.gen_range(0.5..3.0);
        let sb2 = rng.gen_range(0.0..0.5);
        let cfg = NtkConfig::relu(depth, sw2, sb2);
        let got = ntk_pair(&x, &y, &cfg).unwrap();
        let want = kernel::relu_ntk_angular(&x, &y, depth, sw2, sb2);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "trial {trial}: {got} vs {want}"
        );
    }
}

fn min_eig(k: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(k.clone()).eigenvalues.min()
}

#[test]
fn kernel_matrix_is_psd_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for set in 0..50 {
        let m = rng.gen_range(2..40);
        let d = rng.gen_range(1..12);
        let rows = DMatrix::from_fn(m, d, |_, _| rng.gen_range(-3.0..3.0));
        let cfg = NtkConfig::relu(rng.gen_range(1..5), 2.0, rng.gen_range(0.0..0.2));
        let k = kernel_matrix(&rows, &cfg).unwrap();
        assert_eq!(k.entries, k.entries.transpose(), "set {set} not symmetric");
        let lo = min_eig(&k.entries);
        assert!(lo > -1e-8 * k.max_diagonal(), "set {set}: min eigenvalue {lo}");
    }
}

#[test]
fn distinct_normalized_rows_give_positive_definite_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = DMatrix::from_fn(8, 5, |_, _| rng.gen_range(-1.0..1.0));
    for mut r in rows.row_iter_mut() {
        let n = r.norm();
        r /= n;
    }
    let k = kernel_matrix(&rows, &NtkConfig::default()).unwrap();
    assert!(min_eig(&k.entries) > 0.0);
}

#[test]
fn kernel_matrix_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = DMatrix::from_fn(30, 7, |_, _| rng.gen_range(-1.0..1.0));
    let a = kernel_matrix(&rows, &NtkConfig::default()).unwrap();
    let b = kernel_matrix(&rows, &NtkConfig::default()).unwrap();
    let bits = |k: &DMatrix<f64>| k.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.entries), bits(&b.entries));
}

#[test]
fn kernel_entries_agree_with_pairwise_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows = DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
    let cfg = NtkConfig::default();
    let k = kernel_matrix(&rows, &cfg).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let xi: Vec<f64> = rows.row(i).iter().copied().collect();
            let xj: Vec<f64> = rows.row(j).iter().copied().collect();
            let p = ntk_pair(&xi, &xj, &cfg).unwrap();
            assert!((k.entries[(i, j)] - p).abs() <= 1e-14 * p.abs().max(1.0));
        }
    }
}
