use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gaussian_sample, Rng, Tensor};
use crate::schedule::NoiseSchedule;
use crate::scorenet::model::{silu_deriv, ScoreModel};

/// Optimizer and minibatch settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 64,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::invalid("lr and grad_clip must be positive"));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::invalid(format!("adam_{} must be in (0,1)", name)));
            }
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be positive"));
        }
        Ok(())
    }
}

/// Per-parameter gradients, aligned with the model's layer order.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(model: &ScoreModel) -> Self {
        ParamGrads {
            weights: model
                .weights
                .iter()
                .map(|w| Tensor::zeros(w.shape()))
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| Tensor::zeros(b.shape()))
                .collect(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn scale_in_place(&mut self, c: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for v in t.data_mut() {
                *v *= c;
            }
        }
    }

    /// Flat accessor in the same order as `ScoreModel::get_param`.
    pub fn get(&self, mut idx: usize) -> f64 {
        for l in 0..self.weights.len() {
            if idx < self.weights[l].len() {
                return self.weights[l].get(idx);
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                return self.biases[l].get(idx);
            }
            idx -= self.biases[l].len();
        }
        panic!("gradient index out of range");
    }
}

/// Frozen noise draws for one DSM minibatch: a timestep per item and the
/// matching unit-normal perturbation.
#[derive(Debug, Clone)]
pub struct DsmNoise {
    pub ts: Vec<usize>,
    pub eps: Tensor,
}

/// Draw the stochastic part of the DSM objective for a batch.
pub fn draw_dsm_noise(x0_batch: &Tensor, sched: &NoiseSchedule, rng: &mut Rng) -> Result<DsmNoise> {
    let (n, d) = x0_batch.as_matrix()?;
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let ts = (0..n).map(|_| rng.index(sched.t_steps())).collect();
    let eps = gaussian_sample(rng, &[n, d], 0.0, 1.0)?;
    Ok(DsmNoise { ts, eps })
}

/// Deterministic DSM loss given frozen noise draws.
///
/// Per item the regression weight is `1 - alpha_bar(t)`, which turns the
/// score-space residual into the unit-weight epsilon residual
/// `|eps_hat - eps|^2`; the batch loss is the mean of those squared norms.
pub fn dsm_loss_with_noise(
    model: &ScoreModel,
    x0_batch: &Tensor,
    noise: &DsmNoise,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let (loss, _) = dsm_eval(model, x0_batch, noise, sched, false)?;
    Ok(loss)
}

/// Loss plus exact analytic gradients via backpropagation, with frozen
/// noise draws.
pub fn dsm_grad_with_noise(
    model: &ScoreModel,
    x0_batch: &Tensor,
    noise: &DsmNoise,
    sched: &NoiseSchedule,
) -> Result<(f64, ParamGrads)> {
    let (loss, grads) = dsm_eval(model, x0_batch, noise, sched, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// DSM loss and gradients with fresh noise draws from `rng`.
pub fn dsm_loss_and_grad(
    model: &ScoreModel,
    x0_batch: &Tensor,
    sched: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<(f64, ParamGrads)> {
    let noise = draw_dsm_noise(x0_batch, sched, rng)?;
    dsm_grad_with_noise(model, x0_batch, &noise, sched)
}

fn dsm_eval(
    model: &ScoreModel,
    x0_batch: &Tensor,
    noise: &DsmNoise,
    sched: &NoiseSchedule,
    want_grads: bool,
) -> Result<(f64, Option<ParamGrads>)> {
    let (n, d) = x0_batch.as_matrix()?;
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if d != model.data_dim() {
        return Err(Error::shape(&[model.data_dim()], &[d]));
    }
    if noise.ts.len() != n || noise.eps.shape() != [n, d] {
        return Err(Error::invalid("noise draws do not match batch"));
    }
    let mut grads = want_grads.then(|| ParamGrads::zeros_like(model));
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for r in 0..n {
        let t = noise.ts[r];
        if t >= sched.t_steps() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: sched.t_steps(),
            });
        }
        let ab = sched.alpha_bar(t);
        let sigma = sched.sigma(t);
        let x0 = x0_batch.row(r, d);
        let eps = noise.eps.row(r, d);
        // x_t = sqrt(ab) x0 + sigma eps
        let x_t: Vec<f64> = x0
            .iter()
            .zip(eps)
            .map(|(&x, &e)| ab.sqrt() * x + sigma * e)
            .collect();
        if want_grads {
            let cache = model.forward_row_cached(&x_t, sigma);
            let resid: Vec<f64> = cache
                .output
                .iter()
                .zip(eps)
                .map(|(&p, &e)| p - e)
                .collect();
            loss += resid.iter().map(|v| v * v).sum::<f64>() * inv_n;
            let delta: Vec<f64> = resid.iter().map(|v| 2.0 * v * inv_n).collect();
            backprop_row(model, &cache, delta, grads.as_mut().expect("grads"));
        } else {
            let out = model.forward_row(&x_t, sigma);
            loss += out
                .iter()
                .zip(eps)
                .map(|(&p, &e)| (p - e) * (p - e))
                .sum::<f64>()
                * inv_n;
        }
    }
    Ok((loss, grads))
}

/// Accumulate gradients for one row given the output delta `dL/d eps_hat`.
fn backprop_row(
    model: &ScoreModel,
    cache: &crate::scorenet::model::RowCache,
    mut delta: Vec<f64>,
    grads: &mut ParamGrads,
) {
    let n_layers = model.n_layers();
    for l in (0..n_layers).rev() {
        // delta is dL/d(layer output); fold in the activation derivative
        // for hidden layers (the last layer is linear).
        if l + 1 < n_layers {
            for (dv, &z) in delta.iter_mut().zip(&cache.preacts[l]) {
                *dv *= silu_deriv(z);
            }
        }
        let input = &cache.inputs[l];
        let (out_dim, in_dim) = (model.dims[l + 1], model.dims[l]);
        let gw = grads.weights[l].data_mut();
        for i in 0..out_dim {
            let di = delta[i];
            let row = &mut gw[i * in_dim..(i + 1) * in_dim];
            for (g, &a) in row.iter_mut().zip(input) {
                *g += di * a;
            }
        }
        for (g, &di) in grads.biases[l].data_mut().iter_mut().zip(&delta) {
            *g += di;
        }
        if l > 0 {
            let w = model.weights[l].data();
            let mut next = vec![0.0; in_dim];
            for i in 0..out_dim {
                let di = delta[i];
                let row = &w[i * in_dim..(i + 1) * in_dim];
                for (nv, &wv) in next.iter_mut().zip(row) {
                    *nv += di * wv;
                }
            }
            delta = next;
        }
    }
}

struct AdamState {
    m: ParamGrads,
    v: ParamGrads,
    step: usize,
}

impl AdamState {
    fn new(model: &ScoreModel) -> Self {
        AdamState {
            m: ParamGrads::zeros_like(model),
            v: ParamGrads::zeros_like(model),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut ScoreModel, grads: &ParamGrads, cfg: &TrainConfig) {
        self.step += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for l in 0..model.n_layers() {
            for (param, grad, m, v) in [
                (
                    model.weights[l].data_mut(),
                    grads.weights[l].data(),
                    self.m.weights[l].data_mut(),
                    self.v.weights[l].data_mut(),
                ),
                (
                    model.biases[l].data_mut(),
                    grads.biases[l].data(),
                    self.m.biases[l].data_mut(),
                    self.v.biases[l].data_mut(),
                ),
            ] {
                for i in 0..param.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

/// Run `cfg.steps` Adam updates of the DSM loss on minibatches of `data`
/// (`[n, d]` rows, sampled with replacement). Returns the updated model and
/// the per-step loss trace.
pub fn train(
    mut model: ScoreModel,
    data: &Tensor,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(ScoreModel, Vec<f64>)> {
    cfg.validate()?;
    let (n, d) = data.as_matrix()?;
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if d != model.data_dim() {
        return Err(Error::shape(&[model.data_dim()], &[d]));
    }
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut adam = AdamState::new(&model);
    let mut batch_buf = vec![0.0; cfg.batch * d];
    for step in 1..=cfg.steps {
        for b in 0..cfg.batch {
            let idx = rng.index(n);
            batch_buf[b * d..(b + 1) * d].copy_from_slice(data.row(idx, d));
        }
        let batch = Tensor::new(vec![cfg.batch, d], batch_buf.clone())?;
        let (loss, mut grads) = dsm_loss_and_grad(&model, &batch, sched, rng)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        let norm = grads.sq_norm().sqrt();
        if norm > cfg.grad_clip {
            grads.scale_in_place(cfg.grad_clip / norm);
        }
        adam.update(&mut model, &grads, cfg);
        if !model.all_params_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        trace.push(loss);
    }
    Ok((model, trace))
}
