use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::norm::{AbsoluteNorm, ExtremalNormApprox};
use crate::error::{Error, Result};
use crate::posmat::{dot, Mat};
use crate::scalar::Real;
use crate::signals::SwitchedSisModel;

/// Accepted value of `⟨y, A x⟩` in the nonstrict test.
pub const NONSTRICT_TOL: f64 = 1e-8;

/// `ψ(z) = exp(1 − 1/(1 − z²))` on `|z| < 1`, zero elsewhere.
pub fn bump<T: Real>(z: T) -> T {
    if z.abs() >= T::one() {
        return T::zero();
    }
    (T::one() - T::one() / (T::one() - z * z)).exp()
}

pub fn bump_derivative<T: Real>(z: T) -> T {
    if z.abs() >= T::one() {
        return T::zero();
    }
    let q = T::one() - z * z;
    -bump(z) * T::c(2.0) * z / (q * q)
}

/// `ψ_ε(z) = ψ(z + 1 − ε)`: supported on `z < ε`, decreasing on `[0, ε)`.
pub fn psi_eps<T: Real>(z: T, eps: T) -> T {
    bump(z + T::one() - eps)
}

pub fn psi_eps_derivative<T: Real>(z: T, eps: T) -> T {
    bump_derivative(z + T::one() - eps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonstrictReport<T> {
    pub passed: bool,
    /// Largest `⟨y, (A_j − shift·I) x⟩` over samples and modes.
    pub max_violation: T,
    pub worst_sample: Option<Vec<T>>,
    pub worst_mode: Option<usize>,
    pub samples: usize,
    pub tolerance: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport<T> {
    pub passed: bool,
    /// Largest `⟨p, f_j(x)⟩`; the certificate needs it negative.
    pub worst_margin: T,
    pub worst_sample: Option<Vec<T>>,
    pub worst_mode: Option<usize>,
    pub samples: usize,
    pub ell: T,
    pub big_l: T,
    pub eps: T,
}

fn check_dims<T: Real>(model: &SwitchedSisModel<T>, norm: &ExtremalNormApprox<T>) -> Result<()> {
    if norm.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: norm.dim() });
    }
    Ok(())
}

/// A random nonnegative direction; some entries zero, some tiny.
fn random_direction<T: Real>(rng: &mut ChaCha8Rng, n: usize, small: f64) -> Vec<T> {
    loop {
        let z: Vec<T> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                T::c(if u < 0.15 {
                    0.0
                } else if u < 0.3 {
                    small * rng.gen::<f64>()
                } else {
                    rng.gen()
                })
            })
            .collect();
        if z.iter().any(|&v| v > T::zero()) {
            return z;
        }
    }
}

/// Checks `⟨y, (A_j − shift·I) x⟩ <= 1e-8` for dual pairs `(x, y)` with
/// `x >= 0`, `v(x) = 1`: the unit vectors, the base weights and `samples`
/// random points.
pub fn verify_nonstrict_lyapunov<T: Real>(
    model: &SwitchedSisModel<T>,
    norm: &ExtremalNormApprox<T>,
    samples: usize,
    seed: u64,
) -> Result<NonstrictReport<T>> {
    check_dims(model, norm)?;
    let n = model.dim();
    let shifted: Vec<Mat<T>> = model.system_matrices().iter().map(|a| a.shift_diag(-norm.shift)).collect();
    let mut points: Vec<Vec<T>> = (0..n)
        .map(|k| {
            let mut e = vec![T::zero(); n];
            e[k] = T::one();
            e
        })
        .collect();
    points.push(norm.base_norm.weights().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.extend((0..samples).map(|_| random_direction(&mut rng, n, 1e-3)));

    let mut worst: (T, Option<Vec<T>>, Option<usize>) = (T::neg_infinity(), None, None);
    for z in &points {
        let v = norm.norm(z);
        let x: Vec<T> = z.iter().map(|&c| c / v).collect();
        let pair = norm.dual_vector(&x)?;
        for (j, a) in shifted.iter().enumerate() {
            let g = dot(&pair.y, &a.mul_vec(&x));
            if g > worst.0 {
                worst = (g, Some(x.clone()), Some(j));
            }
        }
    }
    let tolerance = T::c(NONSTRICT_TOL);
    Ok(NonstrictReport {
        passed: worst.0 <= tolerance,
        max_violation: worst.0,
        worst_sample: worst.1,
        worst_mode: worst.2,
        samples: points.len(),
        tolerance,
    })
}

/// Samples `x ∈ Σ_n` with `ell <= v(x) <= big_l` and checks
/// `⟨p, f_j(x)⟩ < 0` for every mode, where
/// `p = y (1 + Σ ψ_ε(x_i)) + v(x) Σ ψ_ε'(x_i) e_i` is a subgradient of
/// `V_ε(x) = v(x)(1 + Σ ψ_ε(x_i))`.
pub fn verify_nonlinear_decrease<T: Real>(
    model: &SwitchedSisModel<T>,
    norm: &ExtremalNormApprox<T>,
    ell: T,
    big_l: T,
    eps: T,
    samples: usize,
    seed: u64,
) -> Result<DecreaseReport<T>> {
    check_dims(model, norm)?;
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(ell > T::zero() && ell < big_l) {
        return Err(Error::InvalidInput(format!("need 0 < ell < L, got ell = {ell}, L = {big_l}")));
    }
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: (T, Option<Vec<T>>, Option<usize>) = (T::neg_infinity(), None, None);
    let mut taken = 0;
    let mut attempts = 0;
    while taken < samples && attempts < 50 * samples.max(1) {
        attempts += 1;
        let z: Vec<T> = random_direction(&mut rng, n, eps.to_f64_lossy());
        let vz = norm.norm(&z);
        let zmax = z.iter().copied().fold(T::zero(), T::max);
        // Largest level along the ray that stays inside the unit box.
        let top = big_l.min(vz / zmax);
        if top < ell {
            continue;
        }
        let u: f64 = rng.gen();
        let level = ell * (top / ell).powf(T::c(u));
        let x: Vec<T> = z.iter().map(|&c| (c * level / vz).min(T::one())).collect();
        let v = norm.norm(&x);
        let pair = norm.dual_vector(&x)?;
        let bump_sum: T = x.iter().map(|&xi| psi_eps(xi, eps)).sum();
        let p: Vec<T> = pair
            .y
            .iter()
            .zip(&x)
            .map(|(&yi, &xi)| yi * (T::one() + bump_sum) + v * psi_eps_derivative(xi, eps))
            .collect();
        for (j, m) in model.models().iter().enumerate() {
            let margin = dot(&p, &m.field_unchecked(&x));
            if margin > worst.0 {
                worst = (margin, Some(x.clone()), Some(j));
            }
        }
        taken += 1;
    }
    if taken == 0 {
        return Err(Error::InvalidInput("no sample of the unit box has norm in [ell, L]".into()));
    }
    Ok(DecreaseReport {
        passed: worst.0 < T::zero(),
        worst_margin: worst.0,
        worst_sample: worst.1,
        worst_mode: worst.2,
        samples: taken,
        ell,
        big_l,
        eps,
    })
}
