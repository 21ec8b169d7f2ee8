//! Evaluation metrics: SSIM and AM-SSIM for images, optimal-transport
//! distance and mode coverage for 2D point clouds.

mod modes;
mod ssim;
mod wasserstein;

pub use modes::{mode_coverage, ModeReport};
pub use ssim::{am_ssim, images_from_rows, ssim, SsimOptions};
pub use wasserstein::{
    min_cost_assignment, wasserstein_2d, wasserstein_2d_exact, wasserstein_2d_sinkhorn, EXACT_MAX_POINTS,
    SINKHORN_ITERS, SINKHORN_REG,
};
