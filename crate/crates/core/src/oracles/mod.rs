//! Closed-form and brute-force ground truths plus evaluation metrics.
//!
//! Everything here exists to validate the samplers and the learned model:
//! conjugate Gaussian posteriors, Gaussian-mixture scores under noise
//! convolution, an exhaustive 2-D grid posterior, PSNR, and the sliced
//! Wasserstein distance.

mod gaussian;
mod gmm;
mod grid;
mod linalg;
mod metrics;

pub use gaussian::GaussianPrior;
pub use gmm::{ConvolvedScore, GmmPrior, VpMarginalScore};
pub use grid::{GridPosterior, GridSpec};
pub use metrics::{psnr, sliced_wasserstein};
