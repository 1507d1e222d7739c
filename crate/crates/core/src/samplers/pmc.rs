use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gaussian_sample, Rng, Tensor};
use crate::operators::MeasurementOperator;
use crate::samplers::check_finite;
use crate::scorenet::ScoreFn;

/// Plug-and-play Monte Carlo chain settings.
///
/// The chain runs `n_steps` updates. The denoising strength anneals down a
/// geometric ladder of `n_levels` values from `sigma_max` to `sigma_min`,
/// holding each level for `steps_per_level` steps; once the ladder is
/// exhausted the chain stays at `sigma_min`, so `n_steps` larger than the
/// ladder length buys equilibration at the final level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmcConfig {
    pub n_steps: usize,
    /// Data-fidelity step size.
    pub gamma: f64,
    /// Trust factor on the learned score, ramped across EM iterations.
    pub alpha: f64,
    /// Brownian temperature; injected noise is `N(0, 2 tau I)`. `tau`
    /// equal to `gamma` recovers standard unadjusted Langevin scaling.
    pub tau: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub n_levels: usize,
    pub steps_per_level: usize,
}

impl Default for PmcConfig {
    fn default() -> Self {
        PmcConfig {
            n_steps: 300,
            gamma: 0.01,
            alpha: 1.0,
            tau: 0.01,
            sigma_max: 0.5,
            sigma_min: 0.01,
            n_levels: 10,
            steps_per_level: 30,
        }
    }
}

impl PmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("alpha must be in (0, 1]"));
        }
        if self.tau < 0.0 {
            return Err(Error::invalid("tau must be >= 0"));
        }
        if !(self.sigma_max > self.sigma_min && self.sigma_min > 0.0) {
            return Err(Error::invalid(
                "need sigma_max > sigma_min > 0 for the anneal ladder",
            ));
        }
        if self.n_levels == 0 || self.steps_per_level == 0 || self.n_steps == 0 {
            return Err(Error::invalid("step counts must be positive"));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> PmcConfig {
        PmcConfig {
            alpha,
            ..self.clone()
        }
    }

    /// Denoising strength at chain step `i`.
    pub fn sigma_at(&self, i: usize) -> f64 {
        let level = (i / self.steps_per_level).min(self.n_levels - 1);
        if self.n_levels == 1 {
            return self.sigma_min;
        }
        let frac = level as f64 / (self.n_levels - 1) as f64;
        self.sigma_max * (self.sigma_min / self.sigma_max).powf(frac)
    }
}

/// Diagnostics row for one chain step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub log_likelihood: f64,
    pub state_norm: f64,
}

/// Posterior sampling by the plug-and-play Monte Carlo chain.
///
/// Per step, with `u = x + gamma * grad_x log p(y | x)`:
///
/// `x <- u + alpha * sigma^2 * score(u, sigma) + omega`,
/// `omega ~ N(0, 2 tau I)`,
///
/// annealing `sigma` down the configured ladder. The score term carries the
/// `sigma^2` Tweedie denoising strength scaled by the trust factor `alpha`.
/// `x_init` defaults to the adjoint back-projection `A^T y`.
pub fn sample_pmc(
    model: &dyn ScoreFn,
    op: &MeasurementOperator,
    y: &Tensor,
    cfg: &PmcConfig,
    rng: &mut Rng,
    x_init: Option<&Tensor>,
) -> Result<Tensor> {
    run_chain(model, op, y, cfg, rng, x_init, None)
}

/// Same chain, recording per-step diagnostics.
pub fn sample_pmc_traced(
    model: &dyn ScoreFn,
    op: &MeasurementOperator,
    y: &Tensor,
    cfg: &PmcConfig,
    rng: &mut Rng,
    x_init: Option<&Tensor>,
    trace: &mut Vec<TraceRow>,
) -> Result<Tensor> {
    run_chain(model, op, y, cfg, rng, x_init, Some(trace))
}

fn run_chain(
    model: &dyn ScoreFn,
    op: &MeasurementOperator,
    y: &Tensor,
    cfg: &PmcConfig,
    rng: &mut Rng,
    x_init: Option<&Tensor>,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<Tensor> {
    cfg.validate()?;
    let mut x = match x_init {
        Some(x0) => x0.clone(),
        None => op.adjoint(y)?,
    };
    let noise_std = (2.0 * cfg.tau).sqrt();
    for step in 0..cfg.n_steps {
        let sigma = cfg.sigma_at(step);
        let grad = op.likelihood_grad(&x, y)?;
        if !grad.all_finite() {
            return Err(Error::Divergence {
                step,
                what: "likelihood gradient".to_string(),
            });
        }
        let mut u = x;
        u.add_scaled_assign(cfg.gamma, &grad)?;
        let score = model.score(&u, sigma)?;
        u.add_scaled_assign(cfg.alpha * sigma * sigma, &score)?;
        if cfg.tau > 0.0 {
            let omega = gaussian_sample(rng, u.shape(), 0.0, noise_std)?;
            u.add_scaled_assign(1.0, &omega)?;
        }
        check_finite(&u, step, "chain state")?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow {
                step,
                log_likelihood: op.log_likelihood(&u, y)?,
                state_norm: u.norm(),
            });
        }
        x = u;
    }
    Ok(x)
}
