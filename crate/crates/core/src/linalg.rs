//! Small dense LU factorization with partial pivoting.

use crate::error::{Result, SsmError};
use crate::scalar::Scalar;

/// Row-major square matrix factorized in place, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if a[pivot * n + col] == T::zero() || !a[pivot * n + col].is_finite() {
                return Err(SsmError::Singular);
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                perm.swap(pivot, col);
            }
            let p = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / p;
                a[row * n + col] = f;
                for k in col + 1..n {
                    let u = a[col * n + k];
                    a[row * n + k] -= f * u;
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                let xk = x[k];
                x[i] -= l * xk;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                let xk = x[k];
                x[i] -= u * xk;
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// `||A^{-1}||_inf`, from the explicit inverse (fine for the small systems here).
    pub fn inverse_inf_norm(&self) -> T {
        let n = self.n;
        let mut row_sums = vec![T::zero(); n];
        let mut e = vec![T::zero(); n];
        for col in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[col] = T::one();
            let x = self.solve(&e);
            for (s, v) in row_sums.iter_mut().zip(x) {
                *s += v.abs();
            }
        }
        row_sums.into_iter().fold(T::zero(), T::max)
    }
}

pub fn inf_norm<T: Scalar>(n: usize, a: &[T]) -> T {
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = Lu::factor(3, a.clone()).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((r - [3.0, 2.0, 4.0][i]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        assert!(matches!(Lu::factor(2, vec![1.0, 2.0, 2.0, 4.0]), Err(SsmError::Singular)));
    }

    #[test]
    fn inverse_norm_of_diagonal() {
        let lu = Lu::factor(2, vec![2.0, 0.0, 0.0, 0.25]).unwrap();
        assert_eq!(lu.inverse_inf_norm(), 4.0);
    }
}
