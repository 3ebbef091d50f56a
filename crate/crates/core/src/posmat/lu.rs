use crate::error::{Error, Result};
use crate::posmat::Mat;
use crate::scalar::Real;

/// LU factorisation with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    /// Factors `a`; pivots below `n * eps * ||a||_inf` are reported as singular.
    pub fn new(a: &Mat<T>) -> Result<Self> {
        let n = a.dim();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm_inf();
        let tiny = T::from_usize_lossy(n) * T::epsilon() * scale;
        if scale == T::zero() {
            return Err(Error::Singular);
        }
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, T::zero()), |acc, c| if c.1 > acc.1 { c } else { acc });
            if pmax <= tiny {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in (k + 1)..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= f * u;
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.n;
        let bt = b.transpose();
        let mut cols = Vec::with_capacity(n * n);
        for j in 0..n {
            cols.extend(self.solve(bt.row(j)));
        }
        Mat::from_vec_unchecked(n, cols).transpose()
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve_mat(&Mat::identity(self.n))
    }
}

pub fn solve<T: Real>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    Ok(Lu::new(a)?.solve(b))
}

pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    Ok(Lu::new(a)?.inverse())
}
