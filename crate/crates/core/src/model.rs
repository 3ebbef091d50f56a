//! The autonomous multi-group SIS model `ẋ = (−D + B)x − diag(x)Bx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posmat::{self, Lu, Mat, MetzlerMatrix};
use crate::scalar::Real;

/// Default sup-norm tolerance for equilibrium residuals.
pub const DEFAULT_TOL: f64 = 1e-10;

const MONOTONE_MAX_ITERATIONS: usize = 100_000;

/// One constituent SIS system: recovery-plus-death rates `d` (the diagonal of
/// `D`) and the infection matrix `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SisModel<T: Real> {
    d: Vec<T>,
    b: Mat<T>,
}

impl<T: Real> SisModel<T> {
    pub fn new(d: Vec<T>, b: Mat<T>) -> Result<Self> {
        if d.len() != b.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), found: d.len() });
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("D[{i}] = {v} must be positive and finite")));
        }
        if let Some((k, v)) = b.as_slice().iter().enumerate().find(|(_, v)| **v < T::zero()) {
            let n = b.dim();
            return Err(Error::InvalidInput(format!(
                "B[{}][{}] = {v} must be nonnegative",
                k / n,
                k % n
            )));
        }
        Ok(SisModel { d, b })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    pub fn b(&self) -> &Mat<T> {
        &self.b
    }

    /// The linearisation at the origin, `−D + B`.
    pub fn system_matrix(&self) -> Mat<T> {
        let mut a = self.b.clone();
        for (i, &di) in self.d.iter().enumerate() {
            a[(i, i)] -= di;
        }
        a
    }

    pub fn metzler(&self) -> MetzlerMatrix<T> {
        MetzlerMatrix::new(self.system_matrix()).expect("−D + B is Metzler for B >= 0")
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    /// `f(x) = (−D + B)x − diag(x)Bx`.
    pub fn vector_field(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.field_unchecked(x))
    }

    pub(crate) fn field_unchecked(&self, x: &[T]) -> Vec<T> {
        let bx = self.b.mul_vec(x);
        x.iter()
            .zip(&bx)
            .zip(&self.d)
            .map(|((&xi, &bxi), &di)| -di * xi + (T::one() - xi) * bxi)
            .collect()
    }

    /// `J(x) = −D + B − diag(Bx) − diag(x)B`.
    pub fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        self.check_dim(x)?;
        let n = self.dim();
        let bx = self.b.mul_vec(x);
        let mut j = self.system_matrix();
        for i in 0..n {
            j[(i, i)] -= bx[i];
            for k in 0..n {
                j[(i, k)] -= x[i] * self.b[(i, k)];
            }
        }
        Ok(j)
    }

    /// Basic reproduction number `ρ(D⁻¹B)`.
    pub fn r0(&self) -> Result<T> {
        let n = self.dim();
        let mut m = self.b.clone();
        for i in 0..n {
            for k in 0..n {
                m[(i, k)] /= self.d[i];
            }
        }
        posmat::spectral_radius(&m)
    }

    /// The unique endemic equilibrium in the open positive orthant, present iff `r0 > 1`.
    ///
    /// Runs the monotone iteration `x_i ← (Bx)_i / (d_i + (Bx)_i)` downward from the
    /// all-ones vector and polishes with Newton steps.
    pub fn endemic_equilibrium(&self, tol: T) -> Result<Option<Vec<T>>> {
        if !posmat::is_irreducible(&self.b) {
            return Err(Error::Reducible("infection matrix B is reducible".into()));
        }
        if self.r0()? <= T::one() {
            return Ok(None);
        }
        let n = self.dim();
        let mut x = vec![T::one(); n];
        for it in 1..=MONOTONE_MAX_ITERATIONS {
            let bx = self.b.mul_vec(&x);
            let next: Vec<T> = bx.iter().zip(&self.d).map(|(&v, &di)| v / (di + v)).collect();
            let change = next.iter().zip(&x).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            x = next;
            if change < tol || (it % 64 == 0 && change < T::c(1e-4)) {
                if let Some(polished) = self.newton_polish(&x, tol) {
                    return Ok(Some(polished));
                }
                if change < tol {
                    let res = posmat::vec_norm_inf(&self.field_unchecked(&x));
                    if res <= tol {
                        return Ok(Some(x));
                    }
                }
            }
        }
        Err(Error::NonConvergence {
            what: "endemic equilibrium monotone iteration",
            iterations: MONOTONE_MAX_ITERATIONS,
        })
    }

    fn newton_polish(&self, start: &[T], tol: T) -> Option<Vec<T>> {
        let mut x = start.to_vec();
        // Once the residual is within `tol`, keep stepping while it still drops.
        let mut accepted: Option<(Vec<T>, T)> = None;
        for _ in 0..30 {
            let f = self.field_unchecked(&x);
            let res = posmat::vec_norm_inf(&f);
            let inside = x.iter().all(|&v| v > T::zero() && v <= T::one());
            if inside && res <= tol {
                match &accepted {
                    Some((best, r)) if res >= *r => return Some(best.clone()),
                    _ => accepted = Some((x.clone(), res)),
                }
                if res == T::zero() {
                    return Some(x);
                }
            }
            let step = self.jacobian(&x).ok().and_then(|j| Lu::new(&j).ok()).map(|lu| lu.solve(&f));
            let Some(step) = step else { break };
            for (xi, si) in x.iter_mut().zip(step) {
                *xi -= si;
            }
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        accepted.map(|(x, _)| x)
    }

    /// Threshold classification: disease-free equilibrium globally stable iff `r0 <= 1`.
    pub fn classify(&self, tol: T) -> Result<EquilibriumReport<T>> {
        let r0 = self.r0()?;
        let dfe_gas = r0 <= T::one();
        if dfe_gas {
            return Ok(EquilibriumReport { r0, dfe_gas, endemic: None, classification: Classification::DfeGas });
        }
        if !posmat::is_irreducible(&self.b) {
            return Ok(EquilibriumReport {
                r0,
                dfe_gas,
                endemic: None,
                classification: Classification::DfeUnstable,
            });
        }
        let endemic = self.endemic_equilibrium(tol)?;
        Ok(EquilibriumReport { r0, dfe_gas, endemic, classification: Classification::EndemicExists })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// `r0 <= 1`: the disease-free equilibrium is globally asymptotically stable.
    DfeGas,
    /// `r0 > 1` with irreducible `B`: a unique endemic equilibrium exists.
    EndemicExists,
    /// `r0 > 1` but `B` reducible; no interior equilibrium is claimed.
    DfeUnstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport<T> {
    pub r0: T,
    pub dfe_gas: bool,
    pub endemic: Option<Vec<T>>,
    pub classification: Classification,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(d: f64, b: f64) -> SisModel<f64> {
        SisModel::new(vec![d], Mat::from_diag(&[b])).unwrap()
    }

    fn two_group(d: [f64; 2], b: [[f64; 2]; 2]) -> SisModel<f64> {
        SisModel::new(d.to_vec(), Mat::from_rows(&b).unwrap()).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SisModel::new(vec![0.0], Mat::from_diag(&[1.0])).is_err());
        assert!(SisModel::new(vec![-1.0], Mat::from_diag(&[1.0])).is_err());
        assert!(SisModel::new(vec![1.0], Mat::from_diag(&[-1.0])).is_err());
        assert!(SisModel::new(vec![1.0, 1.0], Mat::from_diag(&[1.0])).is_err());
    }

    #[test]
    fn vector_field_examples() {
        let m = two_group([1.0, 2.0], [[0.5, 2.0], [1.0, 0.0]]);
        assert_eq!(m.vector_field(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(scalar(1.0, 2.0).vector_field(&[0.5]).unwrap(), vec![0.0]);
        assert_eq!(m.vector_field(&[1.0, 1.0]).unwrap(), vec![-1.0, -2.0]);
        assert!(m.vector_field(&[0.0]).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let m = two_group([1.0, 2.0], [[0.5, 2.0], [1.0, 0.0]]);
        assert_eq!(m.jacobian(&[0.0, 0.0]).unwrap(), m.system_matrix());
        assert_eq!(scalar(1.0, 2.0).jacobian(&[0.5]).unwrap()[(0, 0)], -1.0);
    }

    #[test]
    fn r0_examples() {
        assert!((scalar(1.0, 1.0).r0().unwrap() - 1.0).abs() < 1e-15);
        let m = two_group([1.0, 2.0], [[0.0, 2.0], [2.0, 0.0]]);
        assert!((m.r0().unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((scalar(1.0, 2.0).r0().unwrap() - 2.0).abs() < 1e-15);
        let id: SisModel<f64> = SisModel::new(vec![1.0, 1.0], Mat::identity(2)).unwrap();
        assert!((id.r0().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn endemic_examples() {
        let x = scalar(1.0, 2.0).endemic_equilibrium(1e-10).unwrap().unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert_eq!(scalar(2.0, 1.0).endemic_equilibrium(1e-10).unwrap(), None);
        let m = two_group([1.0, 1.0], [[0.0, 2.0], [2.0, 0.0]]);
        let x = m.endemic_equilibrium(1e-10).unwrap().unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn endemic_requires_irreducible_b() {
        let m = two_group([1.0, 1.0], [[3.0, 1.0], [0.0, 3.0]]);
        assert!(matches!(m.endemic_equilibrium(1e-10), Err(Error::Reducible(_))));
    }

    #[test]
    fn endemic_near_threshold_converges() {
        let m = scalar(1.0, 1.001);
        let x = m.endemic_equilibrium(1e-10).unwrap().unwrap();
        assert!((x[0] - (1.0 - 1.0 / 1.001)).abs() < 1e-10);
    }

    #[test]
    fn classify_examples() {
        let low = two_group([1.0, 1.0], [[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(low.classify(1e-10).unwrap().classification, Classification::DfeGas);
        let high = two_group([1.0, 1.0], [[0.0, 2.0], [2.0, 0.0]]);
        let rep = high.classify(1e-10).unwrap();
        assert_eq!(rep.classification, Classification::EndemicExists);
        let x = rep.endemic.unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        let edge = scalar(1.0, 1.0).classify(1e-10).unwrap();
        assert_eq!(edge.classification, Classification::DfeGas);
        assert_eq!(edge.r0, 1.0);
        assert!(edge.dfe_gas);
        let reducible = two_group([1.0, 1.0], [[3.0, 0.0], [0.0, 0.5]]);
        assert_eq!(reducible.classify(1e-10).unwrap().classification, Classification::DfeUnstable);
    }
}
