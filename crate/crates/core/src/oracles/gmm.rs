use crate::error::{Error, Result};
use crate::numkit::{Rng, Tensor};
use crate::oracles::GaussianPrior;
use crate::scorenet::ScoreFn;

/// Finite Gaussian mixture; closed under Gaussian convolution, which makes
/// it the exact oracle for score fields at any noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianPrior>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianPrior>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::invalid("weights and components must match"));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("weights must be positive"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {}, not 1", sum)));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::invalid("components must share dimension"));
        }
        Ok(GmmPrior {
            weights,
            components,
        })
    }

    pub fn single(component: GaussianPrior) -> Self {
        GmmPrior {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    /// Symmetric two-component isotropic mixture at `+/- mean`.
    pub fn symmetric_pair(mean: &[f64], std: f64) -> Result<Self> {
        let plus = GaussianPrior::isotropic(Tensor::from_vec(mean.to_vec()), std)?;
        let minus =
            GaussianPrior::isotropic(Tensor::from_vec(mean.iter().map(|v| -v).collect()), std)?;
        GmmPrior::new(vec![0.5, 0.5], vec![plus, minus])
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Mixture convolved with `N(0, sigma^2 I)`: same weights, inflated
    /// component covariances.
    pub fn convolved(&self, sigma: f64) -> GmmPrior {
        GmmPrior {
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.inflated(sigma * sigma))
                .collect(),
        }
    }

    /// Distribution of `c X` for `X` from this mixture.
    pub fn scaled(&self, c: f64) -> GmmPrior {
        GmmPrior {
            weights: self.weights.clone(),
            components: self.components.iter().map(|g| g.scaled(c)).collect(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| w.ln() + c.log_density(x))
            .collect();
        log_sum_exp(&logs)
    }

    /// Exact mixture score via responsibilities computed in the log domain.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| w.ln() + c.log_density(x))
            .collect();
        let lse = log_sum_exp(&logs);
        let mut out = vec![0.0; self.dim()];
        for (lk, comp) in logs.iter().zip(&self.components) {
            let resp = (lk - lse).exp();
            for (o, s) in out.iter_mut().zip(comp.score(x)) {
                *o += resp * s;
            }
        }
        out
    }

    /// Exact `grad log p_sigma(x)` where `p_sigma` is this prior convolved
    /// with `N(0, sigma^2 I)`.
    pub fn score_sigma(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if sigma < 0.0 {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        if sigma == 0.0 {
            return Ok(self.score(x));
        }
        Ok(self.convolved(sigma).score(x))
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (w, comp) in self.weights.iter().zip(&self.components) {
            acc += w;
            if u < acc {
                return comp.sample(rng);
            }
        }
        self.components.last().expect("non-empty").sample(rng)
    }

    pub fn sample_n(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        let rows: Vec<Tensor> = (0..n).map(|_| self.sample(rng)).collect();
        Tensor::stack_rows(&rows)
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Exact score of the prior convolved with `N(0, sigma^2 I)`; the
/// stand-in for a perfectly trained denoiser in the plug-and-play sense.
pub struct ConvolvedScore {
    pub prior: GmmPrior,
}

impl ScoreFn for ConvolvedScore {
    fn score(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        rowwise(x, self.prior.dim(), |row| self.prior.score_sigma(row, sigma))
    }
}

/// Exact score of the variance-preserving forward marginal at noise level
/// `sigma`: the prior rescaled by `sqrt(1 - sigma^2)` and convolved with
/// `N(0, sigma^2 I)`. This is what denoising score matching trains the
/// network toward, so it is the right oracle for the reverse-time samplers.
pub struct VpMarginalScore {
    pub prior: GmmPrior,
}

impl ScoreFn for VpMarginalScore {
    fn score(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        let ab = (1.0 - sigma * sigma).max(0.0);
        let marginal = self.prior.scaled(ab.sqrt());
        rowwise(x, self.prior.dim(), |row| marginal.score_sigma(row, sigma))
    }
}

fn rowwise(
    x: &Tensor,
    dim: usize,
    f: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Tensor> {
    let (n, d) = x.as_matrix()?;
    if d != dim {
        return Err(Error::shape(&[dim], &[d]));
    }
    let mut out = Vec::with_capacity(n * d);
    for r in 0..n {
        out.extend(f(x.row(r, d))?);
    }
    Tensor::new(x.shape().to_vec(), out)
}
