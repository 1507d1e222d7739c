use crate::error::{Error, Result};
use crate::numkit::{Rng, Tensor};

/// Peak signal-to-noise ratio in dB; identical inputs return the
/// `+infinity` sentinel.
pub fn psnr(x: &Tensor, reference: &Tensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid("peak must be positive"));
    }
    let mse = x.mse(reference)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Sliced 2-Wasserstein distance between two empirical point sets
/// (`[n, d]` and `[m, d]`): the average over random unit directions of the
/// exact 1-D quantile-coupling distance of the projections.
pub fn sliced_wasserstein(a: &Tensor, b: &Tensor, n_proj: usize, rng: &mut Rng) -> Result<f64> {
    if n_proj < 1 {
        return Err(Error::invalid("n_proj must be >= 1"));
    }
    let (n, d) = a.as_matrix()?;
    let (m, db) = b.as_matrix()?;
    if d != db {
        return Err(Error::shape(&[d], &[db]));
    }
    if n < 2 || m < 2 {
        return Err(Error::invalid("need at least 2 points per set"));
    }
    let mut total = 0.0;
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; m];
    for _ in 0..n_proj {
        let dir = random_unit(d, rng);
        project(a, &dir, &mut pa);
        project(b, &dir, &mut pb);
        pa.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        pb.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        total += wasserstein2_sorted(&pa, &pb);
    }
    Ok(total / n_proj as f64)
}

fn random_unit(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn project(points: &Tensor, dir: &[f64], out: &mut [f64]) {
    let d = dir.len();
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = points
            .row(r, d)
            .iter()
            .zip(dir)
            .map(|(&p, &u)| p * u)
            .sum();
    }
}

/// Exact 1-D 2-Wasserstein distance between two sorted samples: both
/// empirical quantile functions are step functions, so the squared distance
/// integrates exactly over the merged quantile breakpoints.
fn wasserstein2_sorted(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let m = b.len();
    let mut i = 0usize;
    let mut j = 0usize;
    let mut q = 0.0f64;
    let mut acc = 0.0f64;
    while i < n && j < m {
        let qa = (i + 1) as f64 / n as f64;
        let qb = (j + 1) as f64 / m as f64;
        let q_next = qa.min(qb);
        let diff = a[i] - b[j];
        acc += diff * diff * (q_next - q);
        if qa <= qb {
            i += 1;
        }
        if qb <= qa {
            j += 1;
        }
        q = q_next;
    }
    acc.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gaussian_sample;

    #[test]
    fn psnr_hand_values() {
        let x = Tensor::from_vec(vec![0.1, 0.1]);
        let r = Tensor::from_vec(vec![0.0, 0.0]);
        let v = psnr(&x, &r, 1.0).unwrap();
        assert!((v - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_awgn_expectation() {
        let mut rng = Rng::from_seed(6);
        let clean = Tensor::zeros(&[200_000]);
        let noisy = gaussian_sample(&mut rng, &[200_000], 0.0, 0.2).unwrap();
        let v = psnr(&noisy, &clean, 1.0).unwrap();
        let expect = -20.0 * 0.2f64.log10();
        assert!((v - expect).abs() < 0.1, "{} vs {}", v, expect);
    }

    #[test]
    fn psnr_decreasing_in_mse() {
        let r = Tensor::zeros(&[4]);
        let a = Tensor::full(&[4], 0.1);
        let b = Tensor::full(&[4], 0.2);
        assert!(psnr(&a, &r, 1.0).unwrap() > psnr(&b, &r, 1.0).unwrap());
    }

    #[test]
    fn sw_identical_sets_zero() {
        let mut rng = Rng::from_seed(8);
        let a = gaussian_sample(&mut rng, &[100, 3], 0.0, 1.0).unwrap();
        let d = sliced_wasserstein(&a, &a, 32, &mut Rng::from_seed(1)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn sw_singleton_translation() {
        let a = Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap();
        let d = sliced_wasserstein(&a, &b, 16, &mut Rng::from_seed(2)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sw_symmetric() {
        let mut rng = Rng::from_seed(9);
        let a = gaussian_sample(&mut rng, &[64, 2], 0.0, 1.0).unwrap();
        let b = gaussian_sample(&mut rng, &[80, 2], 0.5, 1.0).unwrap();
        let d1 = sliced_wasserstein(&a, &b, 64, &mut Rng::from_seed(3)).unwrap();
        let d2 = sliced_wasserstein(&b, &a, 64, &mut Rng::from_seed(3)).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn sw_shifted_gaussians_match_quadrature() {
        // Projections of N(0, I) and N((2,0), I) onto direction theta are
        // unit-variance Gaussians 2*cos(theta) apart, so the distance is
        // E|2 cos(theta)| = 4/pi, evaluated here by quadrature.
        let mut rng = Rng::from_seed(10);
        let a = gaussian_sample(&mut rng, &[10_000, 2], 0.0, 1.0).unwrap();
        let mut b = gaussian_sample(&mut rng, &[10_000, 2], 0.0, 1.0).unwrap();
        for r in 0..10_000 {
            b.data_mut()[r * 2] += 2.0;
        }
        let steps = 100_000;
        let mut quad = 0.0;
        for k in 0..steps {
            let theta = (k as f64 + 0.5) / steps as f64 * 2.0 * std::f64::consts::PI;
            quad += (2.0 * theta.cos()).abs();
        }
        quad /= steps as f64;
        let d = sliced_wasserstein(&a, &b, 100, &mut Rng::from_seed(4)).unwrap();
        assert!((d - quad).abs() / quad < 0.05, "{} vs {}", d, quad);
    }

    #[test]
    fn sw_rejects_bad_args() {
        let a = Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap();
        assert!(sliced_wasserstein(&a, &a, 0, &mut Rng::from_seed(0)).is_err());
        let single = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert!(sliced_wasserstein(&single, &a, 4, &mut Rng::from_seed(0)).is_err());
    }
}
