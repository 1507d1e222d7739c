//! Measurement forward models and their likelihood gradients.
//!
//! Every operator is a linear map `A` plus additive Gaussian noise:
//! `y = A x + n`, `n ~ N(0, noise_std^2 I)`. The three kinds are identity
//! (pure additive noise), pixel masking, and convolution with a symmetric
//! blur kernel. All three are self-adjoint, so the likelihood gradient is
//! `A^T (y - A x) / noise_std^2` with `A^T` implemented exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{conv2d_same, gaussian_sample, rot180, Rng, Tensor};

/// Serialized operator description as it appears in experiment configs and
/// measurement sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Awgn {
        noise_std: f64,
    },
    Inpaint {
        noise_std: f64,
        keep_fraction: f64,
        mask_seed: u64,
    },
    Blur {
        noise_std: f64,
        kernel_size: usize,
        kernel_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Awgn,
    Inpaint { mask: Tensor },
    Blur { kernel: Tensor, height: usize, width: usize },
}

/// Immutable forward model; states are flat vectors, image geometry lives
/// inside the blur variant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    kind: Kind,
    noise_std: f64,
}

impl MeasurementOperator {
    pub fn awgn(noise_std: f64) -> Result<Self> {
        check_noise_std(noise_std)?;
        Ok(MeasurementOperator {
            kind: Kind::Awgn,
            noise_std,
        })
    }

    /// Masking operator. Mask entries must be exactly 0 or 1; the mask is
    /// flattened and applied elementwise.
    pub fn inpaint(mask: Tensor, noise_std: f64) -> Result<Self> {
        check_noise_std(noise_std)?;
        if !mask.data().iter().all(|&v| v == 0.0 || v == 1.0) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        let mask = Tensor::from_vec(mask.into_data());
        Ok(MeasurementOperator {
            kind: Kind::Inpaint { mask },
            noise_std,
        })
    }

    /// Blur operator on `height x width` images (stored flat). The kernel
    /// must be normalized to sum 1 and symmetric under 180-degree rotation
    /// so the map is self-adjoint.
    pub fn blur(kernel: Tensor, height: usize, width: usize, noise_std: f64) -> Result<Self> {
        check_noise_std(noise_std)?;
        if (kernel.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "kernel must sum to 1, got {}",
                kernel.sum()
            )));
        }
        let flipped = rot180(&kernel);
        let dev = kernel
            .data()
            .iter()
            .zip(flipped.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dev > 1e-12 {
            return Err(Error::invalid("kernel must be symmetric"));
        }
        Ok(MeasurementOperator {
            kind: Kind::Blur {
                kernel,
                height,
                width,
            },
            noise_std,
        })
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn is_inpaint(&self) -> bool {
        matches!(self.kind, Kind::Inpaint { .. })
    }

    pub fn mask(&self) -> Option<&Tensor> {
        match &self.kind {
            Kind::Inpaint { mask } => Some(mask),
            _ => None,
        }
    }

    fn check_geometry(&self, x: &Tensor) -> Result<()> {
        match &self.kind {
            Kind::Awgn => Ok(()),
            Kind::Inpaint { mask } => {
                if x.len() != mask.len() {
                    return Err(Error::shape(mask.shape(), x.shape()));
                }
                Ok(())
            }
            Kind::Blur { height, width, .. } => {
                if x.len() != height * width {
                    return Err(Error::shape(&[height * width], x.shape()));
                }
                Ok(())
            }
        }
    }

    /// Noise-free forward map `A x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_geometry(x)?;
        match &self.kind {
            Kind::Awgn => Ok(x.clone()),
            Kind::Inpaint { mask } => {
                let flat = Tensor::from_vec(x.data().to_vec());
                flat.hadamard(mask)
            }
            Kind::Blur {
                kernel,
                height,
                width,
            } => {
                let img = Tensor::new(vec![*height, *width], x.data().to_vec())?;
                let out = conv2d_same(&img, kernel)?;
                Ok(Tensor::from_vec(out.into_data()))
            }
        }
    }

    /// Adjoint map `A^T v` (exact; uses the rotated kernel for blur).
    pub fn adjoint(&self, v: &Tensor) -> Result<Tensor> {
        self.check_geometry(v)?;
        match &self.kind {
            Kind::Awgn => Ok(v.clone()),
            Kind::Inpaint { mask } => {
                let flat = Tensor::from_vec(v.data().to_vec());
                flat.hadamard(mask)
            }
            Kind::Blur {
                kernel,
                height,
                width,
            } => {
                let img = Tensor::new(vec![*height, *width], v.data().to_vec())?;
                let out = conv2d_same(&img, &rot180(kernel))?;
                Ok(Tensor::from_vec(out.into_data()))
            }
        }
    }

    /// Noisy measurement `y = A x + n`.
    pub fn apply(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let mut y = self.forward(x)?;
        let n = gaussian_sample(rng, y.shape(), 0.0, self.noise_std)?;
        y.add_scaled_assign(1.0, &n)?;
        Ok(y)
    }

    /// Gradient of `log p(y | x)`: `A^T (y - A x) / noise_std^2`.
    pub fn likelihood_grad(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        let resid = y.sub(&self.forward(x)?)?;
        let g = self.adjoint(&resid)?;
        Ok(g.scale(1.0 / (self.noise_std * self.noise_std)))
    }

    /// `log p(y | x)` up to its additive constant.
    pub fn log_likelihood(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let resid = y.sub(&self.forward(x)?)?;
        Ok(-resid.dot(&resid)? / (2.0 * self.noise_std * self.noise_std))
    }
}

fn check_noise_std(noise_std: f64) -> Result<()> {
    if !(noise_std > 0.0) {
        return Err(Error::invalid(format!(
            "noise_std must be strictly positive, got {}",
            noise_std
        )));
    }
    Ok(())
}

/// Discretized isotropic Gaussian kernel on a `k x k` grid, normalized to
/// sum 1.
pub fn make_gaussian_kernel(k: usize, std: f64) -> Result<Tensor> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size {} must be odd", k)));
    }
    if !(std > 0.0) {
        return Err(Error::invalid("kernel std must be positive"));
    }
    let c = (k / 2) as isize;
    let mut data = Vec::with_capacity(k * k);
    for i in 0..k as isize {
        for j in 0..k as isize {
            let r2 = ((i - c) * (i - c) + (j - c) * (j - c)) as f64;
            data.push((-r2 / (2.0 * std * std)).exp());
        }
    }
    let z: f64 = data.iter().sum();
    for v in data.iter_mut() {
        *v /= z;
    }
    Tensor::new(vec![k, k], data)
}

/// Binary mask with exactly `round(keep_fraction * count)` ones placed
/// uniformly at random.
pub fn make_random_mask(shape: &[usize], keep_fraction: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "keep_fraction must be in (0, 1], got {}",
            keep_fraction
        )));
    }
    let n: usize = shape.iter().product();
    let keep = (keep_fraction * n as f64).round() as usize;
    let mut values = vec![0.0; n];
    for v in values.iter_mut().take(keep) {
        *v = 1.0;
    }
    rng.shuffle(&mut values);
    Tensor::new(shape.to_vec(), values)
}
