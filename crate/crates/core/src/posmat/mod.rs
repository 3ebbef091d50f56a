//! Metzler and nonnegative matrix toolkit: classification, spectra,
//! irreducibility, matrix exponentials and Kronecker lifts.

mod eigen;
mod expm;
mod graph;
mod lu;
mod mat;

use serde::{Deserialize, Serialize};

pub use eigen::{eigenvalues, Eigenvalue};
pub use expm::expm;
pub use graph::{is_irreducible, union_graph_strongly_connected};
pub use lu::{inverse, solve, Lu};
pub use mat::{dot, vec_norm_inf, Mat};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A square matrix with nonnegative off-diagonal entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat<T>", into = "Mat<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MetzlerMatrix<T: Real>(Mat<T>);

impl<T: Real> MetzlerMatrix<T> {
    pub fn new(m: Mat<T>) -> Result<Self> {
        if let Some((i, j)) = first_negative_off_diagonal(&m) {
            return Err(Error::InvalidInput(format!(
                "not Metzler: entry ({i},{j}) = {} is negative",
                m[(i, j)]
            )));
        }
        Ok(MetzlerMatrix(m))
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.0
    }

    pub fn into_inner(self) -> Mat<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl<T: Real> TryFrom<Mat<T>> for MetzlerMatrix<T> {
    type Error = Error;
    fn try_from(m: Mat<T>) -> Result<Self> {
        Self::new(m)
    }
}

impl<T: Real> From<MetzlerMatrix<T>> for Mat<T> {
    fn from(m: MetzlerMatrix<T>) -> Mat<T> {
        m.0
    }
}

impl<T: Real> AsRef<Mat<T>> for MetzlerMatrix<T> {
    fn as_ref(&self) -> &Mat<T> {
        &self.0
    }
}

fn first_negative_off_diagonal<T: Real>(m: &Mat<T>) -> Option<(usize, usize)> {
    let n = m.dim();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| i != j && m[(i, j)] < T::zero())
}

pub fn is_metzler<T: Real>(m: &Mat<T>) -> bool {
    first_negative_off_diagonal(m).is_none()
}

pub fn is_nonnegative<T: Real>(m: &Mat<T>) -> bool {
    m.as_slice().iter().all(|&v| v >= T::zero())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport<T> {
    pub abscissa: T,
    pub radius: T,
    pub hurwitz: bool,
}

pub fn spectral_report<T: Real>(m: &Mat<T>) -> Result<SpectralReport<T>> {
    let ev = eigenvalues(m)?;
    let abscissa = ev.iter().map(|e| e.re).fold(T::neg_infinity(), T::max);
    let radius = ev.iter().map(Eigenvalue::modulus).fold(T::zero(), T::max);
    Ok(SpectralReport { abscissa, radius, hurwitz: abscissa < T::zero() })
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa<T: Real>(m: &Mat<T>) -> Result<T> {
    Ok(spectral_report(m)?.abscissa)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real>(m: &Mat<T>) -> Result<T> {
    Ok(spectral_report(m)?.radius)
}

/// Block matrix `pi ⊗ I_n`: block `(i, j)` is `pi[i][j] * I_n`.
pub fn kron_with_identity<T: Real>(pi: &Mat<T>, n: usize) -> Mat<T> {
    let m = pi.dim();
    let mut out = Mat::zeros(m * n);
    for i in 0..m {
        for j in 0..m {
            let p = pi[(i, j)];
            if p != T::zero() {
                for k in 0..n {
                    out[(i * n + k, j * n + k)] = p;
                }
            }
        }
    }
    out
}

/// Outcome of the inverse-sign test for a Metzler matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSign {
    /// Invertible with an entrywise nonpositive inverse.
    pub nonpositive: bool,
    pub singular: bool,
}

/// Tests whether `m` is invertible with `m⁻¹ <= 0`; for Metzler matrices this
/// holds exactly when `m` is Hurwitz. A singular matrix yields `false` with the
/// `singular` flag set.
pub fn neg_inverse_nonpositive<T: Real>(m: &MetzlerMatrix<T>) -> InverseSign {
    match Lu::new(m.as_mat()) {
        Err(_) => InverseSign { nonpositive: false, singular: true },
        Ok(lu) => {
            let inv = lu.inverse();
            let tol = T::c(64.0) * T::epsilon() * inv.max_abs();
            let nonpositive = inv.as_slice().iter().all(|&v| v <= tol);
            InverseSign { nonpositive, singular: false }
        }
    }
}
