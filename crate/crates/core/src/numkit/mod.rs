//! Minimal dense-array numerics and deterministic random number generation.

mod conv;
mod rng;
mod tensor;

pub use conv::{conv2d_same, rot180};
pub use rng::{derive_seed, gaussian_sample, Rng};
pub use tensor::Tensor;
