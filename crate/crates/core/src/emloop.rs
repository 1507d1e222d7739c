//! Outer expectation-maximization iteration: posterior sampling of clean
//! data from measurements (E-step) followed by denoising-score-matching
//! refinement of the model (M-step), with a trust ramp on the learned
//! score, a subsample-then-full measurement policy, and fine-tune-then-
//! reset training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{derive_seed, Rng, Tensor};
use crate::oracles::{psnr, sliced_wasserstein};
use crate::samplers::{posterior_batch, sample_unconditional, Measurement, PmcConfig};
use crate::schedule::NoiseSchedule;
use crate::scorenet::{train, ModelConfig, ScoreModel, TrainConfig};

/// Trust factor for EM iteration `k` of `n_iters` (1-based): a geometric
/// ramp from `alpha_min` at the first iteration to exactly 1 at the last.
pub fn alpha_schedule(k: usize, n_iters: usize, alpha_min: f64) -> Result<f64> {
    if k == 0 || k > n_iters {
        return Err(Error::invalid(format!(
            "iteration {} outside 1..={}",
            k, n_iters
        )));
    }
    if !(alpha_min > 0.0 && alpha_min <= 1.0) {
        return Err(Error::invalid("alpha_min must be in (0, 1]"));
    }
    if n_iters == 1 || k == n_iters {
        return Ok(1.0);
    }
    let exponent = (n_iters - k) as f64 / (n_iters - 1) as f64;
    Ok(alpha_min.powf(exponent))
}

/// Full outer-loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub n_iters: usize,
    /// Size of the clean pretraining subset.
    pub n_init_clean: usize,
    /// Measurements drawn per iteration while subsampling.
    pub subsample_size: usize,
    /// Leading iterations that use the subsample instead of the full set.
    pub subsample_iters: usize,
    /// Trailing iterations that re-initialize the model and train from
    /// scratch instead of fine-tuning.
    pub reset_iters: usize,
    pub alpha_min: f64,
    pub chains_per_y: usize,
    pub model: ModelConfig,
    pub train_init: TrainConfig,
    pub train_finetune: TrainConfig,
    pub train_scratch: TrainConfig,
    pub pmc: PmcConfig,
    /// Unconditional samples drawn per iteration for the distribution
    /// metric; 0 disables it.
    pub gen_eval_samples: usize,
    pub sw_projections: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            n_iters: 9,
            n_init_clean: 50,
            subsample_size: 500,
            subsample_iters: 6,
            reset_iters: 3,
            alpha_min: 1e-3,
            chains_per_y: 1,
            model: ModelConfig::default(),
            train_init: TrainConfig::default(),
            train_finetune: TrainConfig {
                steps: 800,
                ..TrainConfig::default()
            },
            train_scratch: TrainConfig {
                steps: 2500,
                ..TrainConfig::default()
            },
            pmc: PmcConfig::default(),
            gen_eval_samples: 1024,
            sw_projections: 64,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::invalid("n_iters must be >= 1"));
        }
        if self.subsample_iters + self.reset_iters > self.n_iters {
            return Err(Error::invalid(
                "subsample_iters + reset_iters must not exceed n_iters",
            ));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= 1.0) {
            return Err(Error::invalid("alpha_min must be in (0, 1]"));
        }
        if self.chains_per_y == 0 {
            return Err(Error::invalid("chains_per_y must be >= 1"));
        }
        self.pmc.validate()?;
        self.train_init.validate()?;
        self.train_finetune.validate()?;
        self.train_scratch.validate()?;
        Ok(())
    }
}

/// Per-iteration metrics; non-finite values are recorded, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIterRecord {
    pub k: usize,
    pub alpha: f64,
    pub dsm_loss: f64,
    pub psnr_mean: f64,
    pub sw_distance: f64,
}

/// E-step output of one iteration: posterior samples keyed by the id of
/// the measurement that produced them.
#[derive(Debug, Clone)]
pub struct EStepSamples {
    pub ids: Vec<u64>,
    pub samples: Vec<Tensor>,
}

/// Pretrain a fresh model on a small clean subset.
pub fn initialize(
    clean_subset: &Tensor,
    sched: &NoiseSchedule,
    cfg: &EmConfig,
    seed: u64,
) -> Result<ScoreModel> {
    let (n, d) = clean_subset.as_matrix()?;
    if n == 0 {
        return Err(Error::invalid("clean initialization subset is empty"));
    }
    let mut rng = Rng::derive(seed, 0x1217);
    let model = ScoreModel::new(d, &cfg.model, &mut rng)?;
    let (model, _) = train(model, clean_subset, sched, &cfg.train_init, &mut rng)?;
    Ok(model)
}

/// One M-step: fine-tune the given model, or re-initialize and train from
/// scratch. Returns the updated model and the training-loss trace.
pub fn m_step(
    model: ScoreModel,
    samples: &Tensor,
    sched: &NoiseSchedule,
    tcfg: &TrainConfig,
    from_scratch: bool,
    rng: &mut Rng,
) -> Result<(ScoreModel, Vec<f64>)> {
    let (n, d) = samples.as_matrix()?;
    if n == 0 {
        return Err(Error::invalid("empty sample set for the M-step"));
    }
    let model = if from_scratch {
        let dims = model.dims().to_vec();
        drop(model);
        ScoreModel::with_dims(dims, rng)?
    } else {
        if d != model.data_dim() {
            return Err(Error::shape(&[model.data_dim()], &[d]));
        }
        model
    };
    train(model, samples, sched, tcfg, rng)
}

/// Run the full loop: for `k = 1..=n_iters` set the trust factor, draw
/// posterior samples over the active measurement set (a fresh random
/// subsample while subsampling, the full set afterwards), then refine the
/// model (fine-tune, or from scratch in the trailing reset iterations).
/// `truth` enables reconstruction PSNR against matching measurement ids.
/// `on_iter` observes each iteration record and the model that produced it.
pub fn em_run(
    measurements: &[Measurement],
    clean_subset: &Tensor,
    sched: &NoiseSchedule,
    cfg: &EmConfig,
    seed: u64,
    truth: Option<&[Tensor]>,
    mut on_iter: impl FnMut(&EmIterRecord, &ScoreModel, &EStepSamples) -> Result<()>,
) -> Result<(ScoreModel, Vec<EmIterRecord>)> {
    cfg.validate()?;
    if measurements.is_empty() {
        return Err(Error::invalid("no measurements"));
    }
    let d = clean_subset.as_matrix()?.1;
    let mut model = initialize(clean_subset, sched, cfg, derive_seed(seed, 1))?;
    let mut history = Vec::with_capacity(cfg.n_iters);
    for k in 1..=cfg.n_iters {
        let step = |e: Error| Error::EmIteration {
            k,
            source: Box::new(e),
        };
        let alpha = alpha_schedule(k, cfg.n_iters, cfg.alpha_min).map_err(step)?;
        let iter_seed = derive_seed(seed, 1000 + k as u64);
        let mut iter_rng = Rng::from_seed(iter_seed);

        // E-step over the active measurement set.
        let active: Vec<Measurement> = if k <= cfg.subsample_iters {
            let take = cfg.subsample_size.min(measurements.len());
            iter_rng
                .choose_indices(measurements.len(), take)
                .into_iter()
                .map(|i| measurements[i].clone())
                .collect()
        } else {
            measurements.to_vec()
        };
        let pmc_cfg = cfg.pmc.with_alpha(alpha);
        let samples = posterior_batch(
            &model,
            &active,
            &pmc_cfg,
            derive_seed(iter_seed, 2),
            cfg.chains_per_y,
        )
        .map_err(step)?;
        let sample_matrix = Tensor::stack_rows(&samples).map_err(step)?;

        // M-step.
        let from_scratch = k > cfg.n_iters - cfg.reset_iters;
        let tcfg = if from_scratch {
            &cfg.train_scratch
        } else {
            &cfg.train_finetune
        };
        let (next_model, trace) = m_step(
            model,
            &sample_matrix,
            sched,
            tcfg,
            from_scratch,
            &mut iter_rng,
        )
        .map_err(step)?;
        model = next_model;

        let record = EmIterRecord {
            k,
            alpha,
            dsm_loss: mean_tail(&trace),
            psnr_mean: truth
                .map(|t| mean_psnr(&active, &samples, cfg.chains_per_y, t))
                .unwrap_or(f64::NAN),
            sw_distance: sw_metric(&model, sched, d, cfg, truth, iter_seed),
        };
        let e_step = EStepSamples {
            ids: active
                .iter()
                .flat_map(|m| std::iter::repeat(m.id).take(cfg.chains_per_y))
                .collect(),
            samples,
        };
        on_iter(&record, &model, &e_step).map_err(step)?;
        history.push(record);
    }
    Ok((model, history))
}

/// Mean training loss over the final quarter of the trace.
fn mean_tail(trace: &[f64]) -> f64 {
    if trace.is_empty() {
        return f64::NAN;
    }
    let start = trace.len() - (trace.len() / 4).max(1);
    let tail = &trace[start..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn mean_psnr(
    active: &[Measurement],
    samples: &[Tensor],
    chains_per_y: usize,
    truth: &[Tensor],
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, item) in active.iter().enumerate() {
        let Some(reference) = truth.get(item.id as usize) else {
            continue;
        };
        for c in 0..chains_per_y {
            if let Ok(v) = psnr(&samples[i * chains_per_y + c], reference, 1.0) {
                total += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}

fn sw_metric(
    model: &ScoreModel,
    sched: &NoiseSchedule,
    d: usize,
    cfg: &EmConfig,
    truth: Option<&[Tensor]>,
    iter_seed: u64,
) -> f64 {
    let (Some(truth), true) = (truth, cfg.gen_eval_samples > 0) else {
        return f64::NAN;
    };
    if truth.len() < 2 {
        return f64::NAN;
    }
    let mut rng = Rng::derive(iter_seed, 3);
    let Ok(generated) = sample_unconditional(model, sched, d, cfg.gen_eval_samples, &mut rng)
    else {
        return f64::NAN;
    };
    let Ok(truth_matrix) = Tensor::stack_rows(truth) else {
        return f64::NAN;
    };
    sliced_wasserstein(
        &generated,
        &truth_matrix,
        cfg.sw_projections,
        &mut Rng::derive(iter_seed, 4),
    )
    .unwrap_or(f64::NAN)
}
