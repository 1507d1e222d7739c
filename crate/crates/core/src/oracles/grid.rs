use crate::error::{Error, Result};
use crate::numkit::{Rng, Tensor};
use crate::operators::MeasurementOperator;

/// Rectangular 2-D lattice for the brute-force posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(half_extent: f64, n: usize) -> Self {
        GridSpec {
            x_min: -half_extent,
            x_max: half_extent,
            y_min: -half_extent,
            y_max: half_extent,
            nx: n,
            ny: n,
        }
    }

    pub fn cell_width(&self) -> (f64, f64) {
        (
            (self.x_max - self.x_min) / self.nx as f64,
            (self.y_max - self.y_min) / self.ny as f64,
        )
    }

    fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let (wx, wy) = self.cell_width();
        (
            self.x_min + (ix as f64 + 0.5) * wx,
            self.y_min + (iy as f64 + 0.5) * wy,
        )
    }
}

/// Normalized product of prior density and measurement likelihood on a 2-D
/// lattice; exposes mean, covariance, and sampling.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    spec: GridSpec,
    /// Cell probabilities, row-major over (iy, ix).
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridPosterior {
    /// Accumulates in the log domain and errors out if the whole lattice
    /// underflows.
    pub fn build(
        log_prior: impl Fn(f64, f64) -> f64,
        op: &MeasurementOperator,
        y: &Tensor,
        spec: GridSpec,
    ) -> Result<Self> {
        if spec.nx < 2 || spec.ny < 2 {
            return Err(Error::invalid("grid must have at least 2x2 cells"));
        }
        let mut logs = Vec::with_capacity(spec.nx * spec.ny);
        let mut max_log = f64::NEG_INFINITY;
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let (px, py) = spec.center(ix, iy);
                let x = Tensor::from_vec(vec![px, py]);
                let ll = op.log_likelihood(&x, y)?;
                let lp = log_prior(px, py);
                let l = lp + ll;
                if l > max_log {
                    max_log = l;
                }
                logs.push(l);
            }
        }
        if !max_log.is_finite() {
            return Err(Error::Underflow(
                "grid posterior carries no finite mass".to_string(),
            ));
        }
        let mut weights: Vec<f64> = logs.iter().map(|l| (l - max_log).exp()).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::Underflow(
                "grid posterior normalization failed".to_string(),
            ));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in weights.iter_mut() {
            *w /= total;
            acc += *w;
            cumulative.push(acc);
        }
        Ok(GridPosterior {
            spec,
            weights,
            cumulative,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0, 0.0];
        for iy in 0..self.spec.ny {
            for ix in 0..self.spec.nx {
                let w = self.weights[iy * self.spec.nx + ix];
                let (px, py) = self.spec.center(ix, iy);
                m[0] += w * px;
                m[1] += w * py;
            }
        }
        m
    }

    pub fn covariance(&self) -> Tensor {
        let m = self.mean();
        let mut c = [0.0; 4];
        for iy in 0..self.spec.ny {
            for ix in 0..self.spec.nx {
                let w = self.weights[iy * self.spec.nx + ix];
                let (px, py) = self.spec.center(ix, iy);
                let dx = px - m[0];
                let dy = py - m[1];
                c[0] += w * dx * dx;
                c[1] += w * dx * dy;
                c[2] += w * dy * dx;
                c[3] += w * dy * dy;
            }
        }
        Tensor::new(vec![2, 2], c.to_vec()).expect("2x2")
    }

    /// Draw lattice cells by inverse CDF and jitter uniformly within the
    /// cell to smooth the quantization.
    pub fn sample_n(&self, n: usize, rng: &mut Rng) -> Tensor {
        let (wx, wy) = self.spec.cell_width();
        let mut out = Vec::with_capacity(n * 2);
        for _ in 0..n {
            let u = rng.next_f64();
            let idx = match self
                .cumulative
                .binary_search_by(|c| c.partial_cmp(&u).expect("finite"))
            {
                Ok(i) | Err(i) => i.min(self.cumulative.len() - 1),
            };
            let ix = idx % self.spec.nx;
            let iy = idx / self.spec.nx;
            let (px, py) = self.spec.center(ix, iy);
            out.push(px + (rng.next_f64() - 0.5) * wx);
            out.push(py + (rng.next_f64() - 0.5) * wy);
        }
        Tensor::new(vec![n, 2], out).expect("sized")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::GaussianPrior;

    fn gaussian_log_density(mean: [f64; 2], std: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| {
            let dx = x - mean[0];
            let dy = y - mean[1];
            -(dx * dx + dy * dy) / (2.0 * std * std)
        }
    }

    #[test]
    fn matches_conjugate_gaussian_mean() {
        let prior = GaussianPrior::isotropic(Tensor::from_vec(vec![0.0, 0.0]), 1.0).unwrap();
        let op = MeasurementOperator::awgn(0.5).unwrap();
        let y = Tensor::from_vec(vec![1.0, -0.4]);
        let a = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let exact = prior.posterior(&a, &y, 0.5).unwrap();
        let grid = GridPosterior::build(
            gaussian_log_density([0.0, 0.0], 1.0),
            &op,
            &y,
            GridSpec::square(6.0, 160),
        )
        .unwrap();
        let m = grid.mean();
        let (wx, _) = grid.spec().cell_width();
        assert!((m[0] - exact.mean.get(0)).abs() < wx);
        assert!((m[1] - exact.mean.get(1)).abs() < wx);
    }

    #[test]
    fn flat_prior_recovers_likelihood() {
        let op = MeasurementOperator::awgn(0.3).unwrap();
        let y = Tensor::from_vec(vec![0.7, 0.2]);
        let grid =
            GridPosterior::build(|_, _| 0.0, &op, &y, GridSpec::square(4.0, 200)).unwrap();
        let m = grid.mean();
        assert!((m[0] - 0.7).abs() < 0.03);
        assert!((m[1] - 0.2).abs() < 0.03);
        let cov = grid.covariance();
        assert!((cov.get(0) - 0.09).abs() < 0.01);
        assert!((cov.get(3) - 0.09).abs() < 0.01);
    }

    #[test]
    fn refinement_converges() {
        let op = MeasurementOperator::awgn(0.4).unwrap();
        let y = Tensor::from_vec(vec![0.9, -0.9]);
        let log_prior = gaussian_log_density([0.3, 0.3], 0.8);
        let coarse = GridPosterior::build(&log_prior, &op, &y, GridSpec::square(5.0, 60)).unwrap();
        let fine = GridPosterior::build(&log_prior, &op, &y, GridSpec::square(5.0, 120)).unwrap();
        let (w_coarse, _) = coarse.spec().cell_width();
        let mc = coarse.mean();
        let mf = fine.mean();
        assert!((mc[0] - mf[0]).abs() < w_coarse);
        assert!((mc[1] - mf[1]).abs() < w_coarse);
    }

    #[test]
    fn all_underflow_is_error() {
        let op = MeasurementOperator::awgn(1e-6).unwrap();
        let y = Tensor::from_vec(vec![1e9, 1e9]);
        let res = GridPosterior::build(
            |_, _| f64::NEG_INFINITY,
            &op,
            &y,
            GridSpec::square(1.0, 10),
        );
        assert!(matches!(res, Err(Error::Underflow(_))));
    }

    #[test]
    fn sampling_matches_moments() {
        let op = MeasurementOperator::awgn(0.5).unwrap();
        let y = Tensor::from_vec(vec![0.5, 0.5]);
        let grid = GridPosterior::build(
            gaussian_log_density([0.0, 0.0], 1.0),
            &op,
            &y,
            GridSpec::square(5.0, 120),
        )
        .unwrap();
        let mut rng = Rng::from_seed(3);
        let samples = grid.sample_n(20_000, &mut rng);
        let m = grid.mean();
        let mut sm = [0.0, 0.0];
        for r in 0..20_000 {
            sm[0] += samples.get(r * 2);
            sm[1] += samples.get(r * 2 + 1);
        }
        sm[0] /= 20_000.0;
        sm[1] /= 20_000.0;
        assert!((sm[0] - m[0]).abs() < 0.02);
        assert!((sm[1] - m[1]).abs() < 0.02);
    }
}
