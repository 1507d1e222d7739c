//! Small dense linear algebra for the oracle computations. Everything here
//! targets the low-dimensional regime (d of a few), where simple Cholesky
//! factorization is accurate and fast.

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let d = square_dim(a)?;
    let m = a.data();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = m[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::LinearAlgebra(format!(
                        "matrix not positive definite (pivot {} = {})",
                        i, sum
                    )));
                }
                l[i * d + j] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Tensor::new(vec![d, d], l)
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
pub fn chol_solve(l: &Tensor, b: &[f64]) -> Vec<f64> {
    let d = l.shape()[0];
    let lm = l.data();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= lm[i * d + k] * y[k];
        }
        y[i] = sum / lm[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in i + 1..d {
            sum -= lm[k * d + i] * x[k];
        }
        x[i] = sum / lm[i * d + i];
    }
    x
}

/// Inverse via Cholesky.
pub fn spd_inverse(a: &Tensor) -> Result<Tensor> {
    let d = square_dim(a)?;
    let l = cholesky(a)?;
    let mut inv = vec![0.0; d * d];
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = chol_solve(&l, &e);
        e[j] = 0.0;
        for i in 0..d {
            inv[i * d + j] = col[i];
        }
    }
    Tensor::new(vec![d, d], inv)
}

/// `log det A` from the Cholesky factor.
pub fn chol_logdet(l: &Tensor) -> f64 {
    let d = l.shape()[0];
    (0..d).map(|i| l.get(i * d + i).ln()).sum::<f64>() * 2.0
}

pub fn matvec(a: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (a.shape()[0], a.shape()[1]);
    let m = a.data();
    (0..rows)
        .map(|i| {
            m[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .map(|(&w, &v)| w * v)
                .sum()
        })
        .collect()
}

/// `A^T A` for a rectangular `[m, d]` matrix.
pub fn gram(a: &Tensor) -> Tensor {
    let (rows, cols) = (a.shape()[0], a.shape()[1]);
    let m = a.data();
    let mut out = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += m[r * cols + i] * m[r * cols + j];
            }
            out[i * cols + j] = s;
        }
    }
    Tensor::new(vec![cols, cols], out).expect("square")
}

/// `A^T y` for a rectangular `[m, d]` matrix.
pub fn mat_t_vec(a: &Tensor, y: &[f64]) -> Vec<f64> {
    let (rows, cols) = (a.shape()[0], a.shape()[1]);
    let m = a.data();
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c] += m[r * cols + c] * y[r];
        }
    }
    out
}

fn square_dim(a: &Tensor) -> Result<usize> {
    match a.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(Error::LinearAlgebra(format!(
            "expected square matrix, got {:?}",
            s
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = Tensor::new(vec![2, 2], vec![4.0, 1.0, 1.0, 3.0]).unwrap();
        let l = cholesky(&a).unwrap();
        let x = chol_solve(&l, &[1.0, 2.0]);
        // 4x + y = 1, x + 3y = 2 -> x = 1/11, y = 7/11
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = Tensor::new(vec![2, 2], vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let inv = spd_inverse(&a).unwrap();
        let prod0 = matvec(&inv, &[2.0, 0.5]);
        let prod1 = matvec(&inv, &[0.5, 1.0]);
        assert!((prod0[0] - 1.0).abs() < 1e-12 && prod0[1].abs() < 1e-12);
        assert!(prod1[0].abs() < 1e-12 && (prod1[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_spd_rejected() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_err());
    }
}
