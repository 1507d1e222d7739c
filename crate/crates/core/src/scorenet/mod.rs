//! Score network and its denoising-score-matching trainer.
//!
//! The network is an epsilon-predictor: for input `(x, sigma)` it outputs
//! `eps_hat`, and the exposed score is `-eps_hat / sigma`. With the
//! schedule convention `sigma(t) = sqrt(1 - alpha_bar(t))` this makes the
//! training loss the standard unit-weight epsilon regression, and it keeps
//! the Tweedie denoiser `x + sigma^2 * score(x, sigma)` finite as
//! `sigma -> 0`.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{
    load_model, model_from_bytes, model_to_bytes, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{ModelConfig, ScoreFn, ScoreModel};
pub use train::{
    dsm_grad_with_noise, dsm_loss_and_grad, dsm_loss_with_noise, draw_dsm_noise, train, DsmNoise,
    ParamGrads,
    TrainConfig,
};
