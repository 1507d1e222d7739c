use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// 2-D correlation with zero padding, output the same size as the image.
///
/// Zero padding makes the adjoint exact: correlating with the 180-degree
/// rotation of the kernel is the transpose of this map.
pub fn conv2d_same(image: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (h, w) = match image.shape() {
        [h, w] => (*h, *w),
        s => return Err(Error::invalid(format!("image must be 2-D, got {:?}", s))),
    };
    let k = match kernel.shape() {
        [a, b] if a == b => *a,
        s => {
            return Err(Error::invalid(format!(
                "kernel must be square 2-D, got {:?}",
                s
            )))
        }
    };
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size {} must be odd", k)));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("image extents must be >= 1".to_string()));
    }

    let c = (k / 2) as isize;
    let img = image.data();
    let ker = kernel.data();
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut acc = 0.0;
            for a in 0..k as isize {
                let ii = i + a - c;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for b in 0..k as isize {
                    let jj = j + b - c;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    acc += img[(ii * w as isize + jj) as usize]
                        * ker[(a * k as isize + b) as usize];
                }
            }
            out[(i * w as isize + j) as usize] = acc;
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Kernel rotated by 180 degrees; correlating with it is the adjoint of
/// `conv2d_same` with the original kernel.
pub fn rot180(kernel: &Tensor) -> Tensor {
    let mut data: Vec<f64> = kernel.data().to_vec();
    data.reverse();
    Tensor::new(kernel.shape().to_vec(), data).expect("shape unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::*;

    fn ones(h: usize, w: usize) -> Tensor {
        Tensor::full(&[h, w], 1.0)
    }

    #[test]
    fn identity_kernel() {
        let mut rng = Rng::from_seed(11);
        let img = crate::numkit::gaussian_sample(&mut rng, &[5, 7], 0.0, 1.0)
            .unwrap();
        let k = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_same(&img, &k).unwrap(), img);
    }

    #[test]
    fn box_kernel_on_ones() {
        // Interior pixels see all nine taps, corners only four.
        let img = ones(5, 5);
        let k = Tensor::full(&[3, 3], 1.0 / 9.0);
        let out = conv2d_same(&img, &k).unwrap();
        assert!((out.get(2 * 5 + 2) - 1.0).abs() < 1e-15);
        for &(i, j) in &[(0, 0), (0, 4), (4, 0), (4, 4)] {
            assert!((out.get(i * 5 + j) - 4.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn even_kernel_rejected() {
        let img = ones(4, 4);
        let k = Tensor::full(&[2, 2], 0.25);
        assert!(conv2d_same(&img, &k).is_err());
    }

    proptest! {
        #[test]
        fn linearity(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = Rng::from_seed(seed);
            let x = crate::numkit::gaussian_sample(&mut rng, &[6, 6], 0.0, 1.0).unwrap();
            let z = crate::numkit::gaussian_sample(&mut rng, &[6, 6], 0.0, 1.0).unwrap();
            let k = crate::numkit::gaussian_sample(&mut rng, &[3, 3], 0.0, 1.0).unwrap();
            let lhs = conv2d_same(&x.scale(a).add(&z.scale(b)).unwrap(), &k).unwrap();
            let rhs = conv2d_same(&x, &k).unwrap().scale(a)
                .add(&conv2d_same(&z, &k).unwrap().scale(b)).unwrap();
            let diff = lhs.sub(&rhs).unwrap();
            prop_assert!(diff.data().iter().all(|v| v.abs() < 1e-12));
        }

        #[test]
        fn adjoint_identity_for_symmetric_kernels(seed in 0u64..1000) {
            let mut rng = Rng::from_seed(seed);
            let x = crate::numkit::gaussian_sample(&mut rng, &[7, 5], 0.0, 1.0).unwrap();
            let z = crate::numkit::gaussian_sample(&mut rng, &[7, 5], 0.0, 1.0).unwrap();
            let raw = crate::numkit::gaussian_sample(&mut rng, &[5, 5], 0.0, 1.0).unwrap();
            let k = raw.add(&rot180(&raw)).unwrap().scale(0.5);
            let lhs = conv2d_same(&x, &k).unwrap().dot(&z).unwrap();
            let rhs = x.dot(&conv2d_same(&z, &k).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn rot180_gives_exact_adjoint(seed in 0u64..1000) {
            let mut rng = Rng::from_seed(seed);
            let x = crate::numkit::gaussian_sample(&mut rng, &[6, 8], 0.0, 1.0).unwrap();
            let z = crate::numkit::gaussian_sample(&mut rng, &[6, 8], 0.0, 1.0).unwrap();
            let k = crate::numkit::gaussian_sample(&mut rng, &[3, 3], 0.0, 1.0).unwrap();
            let lhs = conv2d_same(&x, &k).unwrap().dot(&z).unwrap();
            let rhs = x.dot(&conv2d_same(&z, &rot180(&k)).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
