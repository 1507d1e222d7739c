use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Rng, Tensor};

/// Anything that can evaluate a score field at a noise level.
///
/// Implemented by the learned network and by the closed-form oracle scores,
/// so samplers can be validated with exact scores injected in place of a
/// trained model.
pub trait ScoreFn {
    /// Score at noise level `sigma`. `x` is a single state (rank 1) or a
    /// batch of rows (rank 2); the output mirrors the input shape.
    fn score(&self, x: &Tensor, sigma: f64) -> Result<Tensor>;

    /// MMSE denoiser `x + sigma^2 * score(x, sigma)`.
    fn tweedie_denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        if sigma < 0.0 {
            return Err(Error::invalid(format!("negative sigma {}", sigma)));
        }
        if sigma == 0.0 {
            return Ok(x.clone());
        }
        let s = self.score(x, sigma)?;
        let mut out = x.clone();
        out.add_scaled_assign(sigma * sigma, &s)?;
        Ok(out)
    }
}

/// Architecture hyperparameters (fixed once the model is built).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub embed_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![128, 128],
            embed_width: 16,
        }
    }
}

/// Fully-connected epsilon-predictor with SiLU activations and a sinusoidal
/// noise embedding concatenated to the data input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    /// Layer widths, input first: `[d + E, hidden..., d]`.
    pub(crate) dims: Vec<usize>,
    /// Row-major `[out, in]` weight matrices.
    pub(crate) weights: Vec<Tensor>,
    pub(crate) biases: Vec<Tensor>,
    pub(crate) embed_freqs: Vec<f64>,
    pub(crate) data_dim: usize,
}

pub(crate) fn default_freqs(embed_width: usize) -> Vec<f64> {
    (0..embed_width / 2).map(|j| 0.25 * (1u64 << j) as f64).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub(crate) fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl ScoreModel {
    /// Fresh model. Hidden layers get uniform He initialization; the final
    /// layer starts at zero so an untrained model predicts zero noise.
    pub fn new(data_dim: usize, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::invalid("data_dim must be positive"));
        }
        if cfg.embed_width == 0 || cfg.embed_width % 2 != 0 {
            return Err(Error::invalid(format!(
                "embed_width must be positive and even, got {}",
                cfg.embed_width
            )));
        }
        let mut dims = Vec::with_capacity(cfg.hidden.len() + 2);
        dims.push(data_dim + cfg.embed_width);
        dims.extend_from_slice(&cfg.hidden);
        dims.push(data_dim);
        Self::with_dims(dims, rng)
    }

    /// Model from explicit layer widths (`dims[0] - dims[last]` must be the
    /// even embedding width).
    pub fn with_dims(dims: Vec<usize>, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("need at least input and output layer"));
        }
        let data_dim = *dims.last().expect("non-empty");
        if dims[0] <= data_dim || (dims[0] - data_dim) % 2 != 0 {
            return Err(Error::invalid(format!(
                "input width {} must exceed output width {} by an even embedding width",
                dims[0], data_dim
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let embed_freqs = default_freqs(dims[0] - data_dim);
        let n_layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let last = l == n_layers - 1;
            let limit = if last {
                0.0
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let mut w = vec![0.0; fan_out * fan_in];
            if !last {
                for v in w.iter_mut() {
                    *v = rng.uniform(-limit, limit);
                }
            }
            weights.push(Tensor::new(vec![fan_out, fan_in], w)?);
            biases.push(Tensor::zeros(&[fan_out]));
        }
        Ok(ScoreModel {
            dims,
            weights,
            biases,
            embed_freqs,
            data_dim,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn embed_width(&self) -> usize {
        self.dims[0] - self.data_dim
    }

    pub(crate) fn embed(&self, sigma: f64) -> Vec<f64> {
        let u = sigma.max(1e-6).ln();
        let mut out = Vec::with_capacity(self.embed_width());
        for &f in &self.embed_freqs {
            out.push((f * u).sin());
            out.push((f * u).cos());
        }
        out
    }

    /// Forward pass for one data row, returning the epsilon prediction.
    pub(crate) fn forward_row(&self, x_row: &[f64], sigma: f64) -> Vec<f64> {
        let mut act: Vec<f64> = Vec::with_capacity(self.dims[0]);
        act.extend_from_slice(x_row);
        act.extend(self.embed(sigma));
        let n_layers = self.n_layers();
        for l in 0..n_layers {
            act = self.layer_forward(l, &act, l + 1 < n_layers).0;
        }
        act
    }

    /// Forward pass keeping per-layer inputs and pre-activations for
    /// backpropagation.
    pub(crate) fn forward_row_cached(&self, x_row: &[f64], sigma: f64) -> RowCache {
        let mut input: Vec<f64> = Vec::with_capacity(self.dims[0]);
        input.extend_from_slice(x_row);
        input.extend(self.embed(sigma));
        let n_layers = self.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut preacts = Vec::with_capacity(n_layers);
        let mut act = input;
        for l in 0..n_layers {
            let (out, pre) = self.layer_forward(l, &act, l + 1 < n_layers);
            inputs.push(act);
            preacts.push(pre);
            act = out;
        }
        RowCache {
            inputs,
            preacts,
            output: act,
        }
    }

    fn layer_forward(&self, l: usize, input: &[f64], activate: bool) -> (Vec<f64>, Vec<f64>) {
        let (out_dim, in_dim) = (self.dims[l + 1], self.dims[l]);
        let w = self.weights[l].data();
        let b = self.biases[l].data();
        let mut pre = vec![0.0; out_dim];
        for i in 0..out_dim {
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let mut acc = b[i];
            for (wv, xv) in row.iter().zip(input) {
                acc += wv * xv;
            }
            pre[i] = acc;
        }
        let out = if activate {
            pre.iter().map(|&z| silu(z)).collect()
        } else {
            pre.clone()
        };
        (out, pre)
    }

    /// Epsilon prediction for a single state or a batch of rows.
    pub fn predict_eps(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        let (n, d) = x.as_matrix()?;
        if d != self.data_dim {
            return Err(Error::shape(&[self.data_dim], &[d]));
        }
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            out.extend(self.forward_row(x.row(r, d), sigma));
        }
        Tensor::new(x.shape().to_vec(), out)
    }

    pub fn all_params_finite(&self) -> bool {
        self.weights.iter().all(Tensor::all_finite) && self.biases.iter().all(Tensor::all_finite)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().map(Tensor::len).sum::<usize>()
    }

    /// Flat parameter accessor in (layer weights, layer bias) declaration
    /// order; used by finite-difference checks and the checkpoint format.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in 0..self.n_layers() {
            if idx < self.weights[l].len() {
                return self.weights[l].get(idx);
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                return self.biases[l].get(idx);
            }
            idx -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for l in 0..self.n_layers() {
            if idx < self.weights[l].len() {
                self.weights[l].data_mut()[idx] = value;
                return;
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                self.biases[l].data_mut()[idx] = value;
                return;
            }
            idx -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }
}

impl ScoreFn for ScoreModel {
    /// `-eps_hat / sigma`; `sigma` is floored at 1e-12 so a zero prediction
    /// maps to a zero score even at `sigma == 0`.
    fn score(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        if sigma < 0.0 {
            return Err(Error::invalid(format!("negative sigma {}", sigma)));
        }
        let eps_hat = self.predict_eps(x, sigma)?;
        Ok(eps_hat.scale(-1.0 / sigma.max(1e-12)))
    }
}

pub(crate) struct RowCache {
    /// Input to each layer (activation of the previous one).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pub preacts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}
