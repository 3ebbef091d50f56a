use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense square matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Mat { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows, rejecting ragged or non-finite input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("matrix must have at least one row".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("entry ({i},{j}) is not finite")));
                }
                data.push(v);
            }
        }
        Ok(Mat { n, data })
    }

    /// Builds a matrix from an `n*n` row-major buffer.
    pub fn from_vec(n: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Mat { n, data })
    }

    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Mat { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        Mat { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// `self + s * I`
    pub fn shift_diag(&self, s: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m[(i, i)] += s;
        }
        m
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n, "vector length must match matrix dimension");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Row vector times matrix: `y^T A`.
    pub fn vec_mul(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.n, "vector length must match matrix dimension");
        let mut out = vec![T::zero(); self.n];
        for (i, &yi) in y.iter().enumerate() {
            if yi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matrix dimensions must agree");
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Mat { n, data: out }
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm_1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_entry(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Entrywise `self <= other`.
    pub fn le_entrywise(&self, other: &Self) -> bool {
        self.n == other.n && self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Entrywise maximum of two matrices.
    pub fn max_entrywise(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Mat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a.max(b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat { n: self.n, data: self.data.iter().map(|v| v.to_f64_lossy()).collect() }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n, "matrix dimensions must agree");
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Real> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n, "matrix dimensions must agree");
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.map(|v| -v)
    }
}

/// Sup norm of a vector.
pub fn vec_norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}
