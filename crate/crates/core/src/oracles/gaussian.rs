use crate::error::{Error, Result};
use crate::numkit::{Rng, Tensor};
use crate::oracles::linalg::{
    chol_logdet, chol_solve, cholesky, gram, mat_t_vec, matvec, spd_inverse,
};

/// Multivariate normal `N(mean, cov)` with symmetric positive-definite
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Tensor,
    pub cov: Tensor,
}

impl GaussianPrior {
    pub fn new(mean: Tensor, cov: Tensor) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != [d, d] {
            return Err(Error::shape(&[d, d], cov.shape()));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov.get(i * d + j) - cov.get(j * d + i)).abs() > 1e-12 {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
            }
        }
        cholesky(&cov)?;
        Ok(GaussianPrior { mean, cov })
    }

    /// Isotropic `N(mean, std^2 I)`.
    pub fn isotropic(mean: Tensor, std: f64) -> Result<Self> {
        let d = mean.len();
        let mut cov = Tensor::zeros(&[d, d]);
        for i in 0..d {
            cov.data_mut()[i * d + i] = std * std;
        }
        GaussianPrior::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Covariance inflated by `v * I`.
    pub fn inflated(&self, v: f64) -> GaussianPrior {
        let d = self.dim();
        let mut cov = self.cov.clone();
        for i in 0..d {
            cov.data_mut()[i * d + i] += v;
        }
        GaussianPrior {
            mean: self.mean.clone(),
            cov,
        }
    }

    /// Affine rescale `x -> c x` of the distribution: mean `c mu`,
    /// covariance `c^2 Sigma`.
    pub fn scaled(&self, c: f64) -> GaussianPrior {
        GaussianPrior {
            mean: self.mean.scale(c),
            cov: self.cov.scale(c * c),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let l = cholesky(&self.cov).expect("validated at construction");
        let resid: Vec<f64> = x
            .iter()
            .zip(self.mean.data())
            .map(|(&a, &m)| a - m)
            .collect();
        let sol = chol_solve(&l, &resid);
        let maha: f64 = resid.iter().zip(&sol).map(|(&r, &s)| r * s).sum();
        -0.5 * (maha + chol_logdet(&l) + d as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// `grad_x log N(x; mean, cov) = -cov^{-1} (x - mean)`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let l = cholesky(&self.cov).expect("validated at construction");
        let resid: Vec<f64> = x
            .iter()
            .zip(self.mean.data())
            .map(|(&a, &m)| a - m)
            .collect();
        chol_solve(&l, &resid).into_iter().map(|v| -v).collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let d = self.dim();
        let l = cholesky(&self.cov).expect("validated at construction");
        let z: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let lz = {
            let lm = l.data();
            (0..d)
                .map(|i| (0..=i).map(|k| lm[i * d + k] * z[k]).sum::<f64>())
                .collect::<Vec<f64>>()
        };
        Tensor::from_vec(
            lz.iter()
                .zip(self.mean.data())
                .map(|(&a, &m)| a + m)
                .collect(),
        )
    }

    /// Conjugate posterior for the linear-Gaussian observation
    /// `y = A x + n`, `n ~ N(0, noise_std^2 I)`:
    /// `Sigma_p = (Sigma0^{-1} + A^T A / s^2)^{-1}`,
    /// `mu_p = Sigma_p (Sigma0^{-1} mu0 + A^T y / s^2)`.
    pub fn posterior(&self, a: &Tensor, y: &Tensor, noise_std: f64) -> Result<GaussianPrior> {
        let d = self.dim();
        let (m, cols) = a.as_matrix()?;
        if cols != d {
            return Err(Error::shape(&[m, d], a.shape()));
        }
        if y.len() != m {
            return Err(Error::shape(&[m], y.shape()));
        }
        if !(noise_std > 0.0) {
            return Err(Error::invalid("noise_std must be positive"));
        }
        let prior_prec = spd_inverse(&self.cov)?;
        let s2 = noise_std * noise_std;
        let mut post_prec = gram(a);
        for v in post_prec.data_mut() {
            *v /= s2;
        }
        let post_prec = post_prec.add(&prior_prec)?;
        let post_cov = spd_inverse(&post_prec)?;
        let mut rhs = matvec(&prior_prec, self.mean.data());
        for (r, aty) in rhs.iter_mut().zip(mat_t_vec(a, y.data())) {
            *r += aty / s2;
        }
        let mean = matvec(&post_cov, &rhs);
        GaussianPrior::new(Tensor::from_vec(mean), post_cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_conjugate_algebra() {
        let prior = GaussianPrior::isotropic(Tensor::from_vec(vec![0.0]), 1.0).unwrap();
        let a = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let y = Tensor::from_vec(vec![2.0]);
        let post = prior.posterior(&a, &y, 1.0).unwrap();
        assert!((post.mean.get(0) - 1.0).abs() < 1e-12);
        assert!((post.cov.get(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uninformative_likelihood_returns_prior() {
        let prior = GaussianPrior::new(
            Tensor::from_vec(vec![0.3, -0.2]),
            Tensor::new(vec![2, 2], vec![1.0, 0.2, 0.2, 0.8]).unwrap(),
        )
        .unwrap();
        let a = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = Tensor::from_vec(vec![5.0, -5.0]);
        let post = prior.posterior(&a, &y, 1e6).unwrap();
        for i in 0..2 {
            assert!((post.mean.get(i) - prior.mean.get(i)).abs() < 1e-6);
        }
        for i in 0..4 {
            assert!((post.cov.get(i) - prior.cov.get(i)).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_coordinate_keeps_prior_marginal() {
        let prior = GaussianPrior::isotropic(Tensor::from_vec(vec![0.5, -1.0]), 0.8).unwrap();
        let a = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let y = Tensor::from_vec(vec![1.2, 0.0]);
        let post = prior.posterior(&a, &y, 0.3).unwrap();
        // Unobserved second coordinate: marginal unchanged.
        assert!((post.mean.get(1) - (-1.0)).abs() < 1e-10);
        assert!((post.cov.get(3) - 0.64).abs() < 1e-10);
        // Observed coordinate shrinks toward the measurement.
        assert!(post.cov.get(0) < 0.64);
    }

    #[test]
    fn score_matches_density_gradient() {
        let g = GaussianPrior::new(
            Tensor::from_vec(vec![0.2, -0.4]),
            Tensor::new(vec![2, 2], vec![1.5, 0.4, 0.4, 0.9]).unwrap(),
        )
        .unwrap();
        let x = [0.7, 0.1];
        let s = g.score(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (g.log_density(&xp) - g.log_density(&xm)) / (2.0 * h);
            assert!((s[i] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_covariance_rejected() {
        let cov = Tensor::new(vec![2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(GaussianPrior::new(Tensor::from_vec(vec![0.0, 0.0]), cov).is_err());
    }
}
