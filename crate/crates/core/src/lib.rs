//! Learning score-based diffusion priors directly from corrupted
//! measurements.
//!
//! The pipeline alternates two steps until the model converges: posterior
//! sampling of clean data given the measurements with a plug-and-play
//! Monte Carlo chain (E-step), and refitting the score network on those
//! samples by denoising score matching (M-step). A trust factor on the
//! learned score ramps up across iterations as the model improves.
//!
//! Everything is validated against closed-form oracles: conjugate Gaussian
//! posteriors, Gaussian-mixture scores under noise convolution, and a
//! brute-force 2-D grid posterior.

pub mod emloop;
pub mod error;
pub mod numkit;
pub mod operators;
pub mod oracles;
pub mod samplers;
pub mod schedule;
pub mod scorenet;

pub use error::{Error, Result};
pub use numkit::{Rng, Tensor};
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use scorenet::{ScoreFn, ScoreModel};
