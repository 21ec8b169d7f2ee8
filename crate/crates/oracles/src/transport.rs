//! Brute-force optimal transport between equal-size uniform point clouds.

use nalgebra::DMatrix;

/// Every permutation of `0..n`, built by insertion.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Mean squared Euclidean cost of the best one-to-one matching, by trying
/// all permutations. Only usable for a handful of points.
pub fn squared_w2_brute_force(a: &DMatrix<f64>, b: &DMatrix<f64>, perms: &[Vec<usize>]) -> f64 {
    let n = a.nrows();
    let cost = |i: usize, j: usize| (a.row(i) - b.row(j)).norm_squared();
    perms
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}
