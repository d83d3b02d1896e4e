//! Cholesky factorization and triangular solves for small kernel matrices.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    factor: Matrix<T>,
    /// Diagonal jitter that had to be added before the factorization
    /// succeeded (zero on the happy path).
    pub jitter: T,
}

const MAX_JITTER: f64 = 1e-4;

impl<T: Real> Cholesky<T> {
    /// Factor `m`, escalating a diagonal jitter from 1e-10 by decades up to
    /// 1e-4 if the bare matrix is numerically indefinite.
    pub fn factor_with_jitter(m: &Matrix<T>) -> Result<Self> {
        let mut jitter = T::zero();
        loop {
            match Self::factor(m, jitter) {
                Some(factor) => {
                    return Ok(Cholesky { factor, jitter });
                }
                None => {
                    jitter = if jitter == T::zero() {
                        T::from_f64_lossy(1e-10)
                    } else {
                        jitter * T::from_f64_lossy(10.0)
                    };
                    if jitter > T::from_f64_lossy(MAX_JITTER) {
                        return Err(Error::Factorization {
                            max_jitter: MAX_JITTER,
                        });
                    }
                }
            }
        }
    }

    fn factor(m: &Matrix<T>, jitter: T) -> Option<Matrix<T>> {
        let n = m.rows();
        debug_assert_eq!(n, m.cols());
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m[(i, j)];
                if i == j {
                    sum = sum + jitter;
                }
                for k in 0..j {
                    sum = sum - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if !(sum > T::zero()) {
                        return None;
                    }
                    l[(i, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn factor_matrix(&self) -> &Matrix<T> {
        &self.factor
    }

    /// Solve `L x = b` by forward substitution.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut x = vec![T::zero(); n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum = sum - self.factor[(i, k)] * x[k];
            }
            x[i] = sum / self.factor[(i, i)];
        }
        x
    }

    /// Solve `L^T x = b` by backward substitution.
    pub fn solve_lower_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in i + 1..n {
                sum = sum - self.factor[(k, i)] * x[k];
            }
            x[i] = sum / self.factor[(i, i)];
        }
        x
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_the_matrix() {
        let m = Matrix::from_rows(vec![
            vec![4.0f64, 2.0, 0.6],
            vec![2.0, 5.0, 1.5],
            vec![0.6, 1.5, 3.0],
        ])
        .unwrap();
        let chol = Cholesky::factor_with_jitter(&m).unwrap();
        assert_eq!(chol.jitter, 0.0);
        let l = chol.factor_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let mut rebuilt = 0.0;
                for k in 0..3 {
                    rebuilt += l[(i, k)] * l[(j, k)];
                }
                assert!((rebuilt - m[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_matches_direct_inverse_on_2x2() {
        let m = Matrix::from_rows(vec![vec![3.0f64, 1.0], vec![1.0, 2.0]]).unwrap();
        let chol = Cholesky::factor_with_jitter(&m).unwrap();
        let x = chol.solve(&[5.0, 5.0]);
        // Inverse of [[3,1],[1,2]] is [[2,-1],[-1,3]]/5.
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_gets_jitter_not_failure() {
        let m = Matrix::from_rows(vec![vec![1.0f64, 1.0], vec![1.0, 1.0]]).unwrap();
        let chol = Cholesky::factor_with_jitter(&m).unwrap();
        assert!(chol.jitter > 0.0 && chol.jitter <= 1e-4);
    }

    #[test]
    fn hopeless_matrix_fails_after_escalation() {
        let m = Matrix::from_rows(vec![vec![-5.0f64, 0.0], vec![0.0, -5.0]]).unwrap();
        assert!(matches!(
            Cholesky::factor_with_jitter(&m),
            Err(Error::Factorization { .. })
        ));
    }
}
