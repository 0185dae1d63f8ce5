//! Small dense LU factorisation with partial pivoting.
//!
//! Confusion matrices are at most a few dozen levels wide, so a plain
//! row-major `Vec` is all the storage we need.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
    sign: T,
    singular: bool,
}

impl<T: Real> Lu<T> {
    /// Factors the row-major `n x n` matrix `a`.
    pub fn factor(a: &[T], n: usize) -> Self {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let mut singular = false;

        for k in 0..n {
            let mut pivot = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    pivot = i;
                }
            }
            if best == T::zero() {
                singular = true;
                continue;
            }
            if pivot != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot * n + j);
                }
                perm.swap(k, pivot);
                sign = -sign;
            }
            let diag = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / diag;
                lu[i * n + k] = factor;
                for j in (k + 1)..n {
                    let upper = lu[k * n + j];
                    lu[i * n + j] -= factor * upper;
                }
            }
        }

        Self {
            n,
            lu,
            perm,
            sign,
            singular,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn determinant(&self) -> T {
        if self.singular {
            return T::zero();
        }
        (0..self.n).fold(self.sign, |acc, i| acc * self.lu[i * self.n + i])
    }

    /// Solves `A x = b`. Returns `None` when a zero pivot was hit.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        if self.singular {
            return None;
        }
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[i * n + i];
        }
        Some(x)
    }
}

/// `A x` for a row-major square matrix.
pub fn mat_vec<T: Real>(a: &[T], n: usize, x: &[T]) -> Vec<T> {
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}
