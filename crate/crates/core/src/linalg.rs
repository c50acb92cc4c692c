//! Small dense linear algebra for the shared covariance: square row-major
//! matrices, Cholesky factorisation and SPD inversion.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference between `self[i][j]` and `self[j][i]`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Returns `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += shift;
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            let row = self.row(i);
            let inner: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += vi * inner;
        }
        acc
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Factorises a symmetric positive definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.dim();
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                let v = l.get(j, k);
                diag -= v * v;
            }
            if diag.is_nan() || diag <= 0.0 || diag.is_infinite() {
                return Err(Error::NumericalFailure(alloc::format!(
                    "matrix is not positive definite (pivot {j} = {diag:e})"
                )));
            }
            let diag = libm::sqrt(diag);
            l.set(j, j, diag);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / diag);
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `A x = b` in place.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.lower.dim();
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l.get(i, k) * b[k];
            }
            b[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l.get(k, i) * b[k];
            }
            b[i] = s / l.get(i, i);
        }
    }

    /// `A⁻¹`, symmetrised so that the result is exactly symmetric.
    pub fn inverse(&self) -> Matrix {
        let n = self.lower.dim();
        let mut inv = Matrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for (i, &v) in col.iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, avg);
                inv.set(j, i, avg);
            }
        }
        inv
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_inverse_of_diagonal() {
        let a = Matrix::from_diagonal(&[4.0, 1.0, 0.5]);
        let inv = Cholesky::factor(&a).unwrap().inverse();
        assert_relative_eq!(inv.get(0, 0), 0.25);
        assert_relative_eq!(inv.get(1, 1), 1.0);
        assert_relative_eq!(inv.get(2, 2), 2.0);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = Matrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn solve_matches_known_system() {
        // [[4,2],[2,3]] x = [2,1] -> x = [0.5, 0]
        let a = Matrix::from_row_major(2, alloc::vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let mut b = [2.0, 1.0];
        Cholesky::factor(&a).unwrap().solve_in_place(&mut b);
        assert_relative_eq!(b[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(b[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_relative_eq!(cosine(&[1.0, 1.0], &[2.0, 2.0]), 1.0, epsilon = 1e-15);
    }
}
