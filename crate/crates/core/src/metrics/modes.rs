use nalgebra::DMatrix;

use crate::data::GmmSpec;
use crate::{Error, Result};

/// How many mixture modes a generated cloud reaches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub modes_hit: usize,
    /// Points assigned to each center that lie within the radius.
    pub per_mode_counts: Vec<usize>,
    pub radius_sigmas: f64,
}

/// Each point is assigned to its nearest center; a mode is hit when at
/// least one assigned point lies within `radius_sigmas * sigma` of it.
pub fn mode_coverage(gen: &DMatrix<f64>, spec: &GmmSpec, radius_sigmas: f64) -> Result<ModeReport> {
    if !(radius_sigmas.is_finite() && radius_sigmas > 0.0) {
        return Err(Error::InvalidConfig(format!("radius_sigmas must be > 0, got {radius_sigmas}")));
    }
    if gen.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: gen.ncols(),
        });
    }
    let radius = radius_sigmas * spec.sigma;
    let mut counts = vec![0; spec.centers.len()];
    for i in 0..gen.nrows() {
        let (c, d) = spec.nearest([gen[(i, 0)], gen[(i, 1)]]);
        if d <= radius {
            counts[c] += 1;
        }
    }
    Ok(ModeReport {
        modes_hit: counts.iter().filter(|&&c| c > 0).count(),
        per_mode_counts: counts,
        radius_sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_gmm;

    fn centers_matrix(spec: &GmmSpec) -> DMatrix<f64> {
        DMatrix::from_fn(spec.centers.len(), 2, |i, j| spec.centers[i][j])
    }

    #[test]
    fn centers_hit_everything() {
        let spec = GmmSpec::grid25();
        let r = mode_coverage(&centers_matrix(&spec), &spec, 3.0).unwrap();
        assert_eq!(r.modes_hit, 25);
        assert_eq!(r.per_mode_counts, vec![1; 25]);
    }

    #[test]
    fn collapse_hits_one() {
        let spec = GmmSpec::grid25();
        let gen = DMatrix::from_fn(40, 2, |_, j| spec.centers[7][j]);
        let r = mode_coverage(&gen, &spec, 3.0).unwrap();
        assert_eq!(r.modes_hit, 1);
        assert_eq!(r.per_mode_counts[7], 40);
    }

    #[test]
    fn samples_cover_all_modes() {
        let spec = GmmSpec::grid25();
        let r = mode_coverage(&sample_gmm(&spec, 500, 4).rows, &spec, 3.0).unwrap();
        assert_eq!(r.modes_hit, 25);
        assert!(r.per_mode_counts.iter().sum::<usize>() <= 500);
    }

    #[test]
    fn points_outside_radius_do_not_count() {
        let spec = GmmSpec::ring8();
        let gen = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert_eq!(mode_coverage(&gen, &spec, 3.0).unwrap().modes_hit, 0);
        assert!(mode_coverage(&gen, &spec, 0.0).is_err());
    }
}
