//! Averaged systems, the averaging error bound, convex-combination search,
//! and switching constructions for persistence, periodic orbits and
//! stabilization.

mod orbit;
mod stabilize;

pub use orbit::{periodic_orbit, persistence_construction, OrbitMethod, Persistence, PeriodicOrbit};
pub use stabilize::{stabilize, Stabilization};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SisModel;
use crate::posmat::{spectral_abscissa, Mat};
use crate::scalar::Real;
use crate::signals::{validate_weights, SwitchedSisModel};

/// Required margin of `μ(R)` away from zero.
pub const SIGN_MARGIN: f64 = 1e-6;
/// Periods are halved from 1 at most this many times.
pub const MAX_HALVINGS: usize = 20;

/// `R = Σ κ_j (−D_j + B_j) = −D̂ + B̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCombination<T> {
    pub kappa: Vec<T>,
    pub r: Mat<T>,
    pub d_hat: Vec<T>,
    pub b_hat: Mat<T>,
    /// `μ(R)`.
    pub abscissa: T,
}

impl<T: Real> ConvexCombination<T> {
    pub fn new(model: &SwitchedSisModel<T>, kappa: &[T]) -> Result<Self> {
        if kappa.len() != model.modes() {
            return Err(Error::DimensionMismatch { expected: model.modes(), found: kappa.len() });
        }
        validate_weights(kappa)?;
        let n = model.dim();
        let mut d_hat = vec![T::zero(); n];
        let mut b_hat = Mat::zeros(n);
        for (k, m) in kappa.iter().zip(model.models()) {
            for (dh, &d) in d_hat.iter_mut().zip(m.d()) {
                *dh += *k * d;
            }
            b_hat = &b_hat + &m.b().scale(*k);
        }
        let mut r = Mat::zeros(n);
        for (k, a) in kappa.iter().zip(model.system_matrices()) {
            r = &r + &a.scale(*k);
        }
        let mut check = b_hat.clone();
        for (i, &d) in d_hat.iter().enumerate() {
            check[(i, i)] -= d;
        }
        let scale = T::one().max(r.max_abs());
        debug_assert!(r.max_abs_diff(&check) <= T::c(64.0) * T::epsilon() * scale);
        let abscissa = spectral_abscissa(&r)?;
        Ok(ConvexCombination { kappa: kappa.to_vec(), r, d_hat, b_hat, abscissa })
    }

    pub fn averaged(&self) -> Result<SisModel<T>> {
        SisModel::new(self.d_hat.clone(), self.b_hat.clone())
    }
}

/// The averaged SIS system `(D̂, B̂)`.
pub fn averaged_model<T: Real>(model: &SwitchedSisModel<T>, kappa: &[T]) -> Result<SisModel<T>> {
    ConvexCombination::new(model, kappa)?.averaged()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingBound<T> {
    /// Lipschitz constant of every `f_j` on the unit box (∞-norm).
    pub k: T,
    /// Bound on `‖f_j‖∞` over the unit box.
    pub r: T,
    pub period: T,
    /// `T·r·e^{2K}(2 + K)`.
    pub bound_value: T,
}

/// Exact `sup |f_i|` and `sup Σ_k |J_ik|` over the unit box for one model,
/// maximised over rows.
fn box_constants<T: Real>(m: &SisModel<T>) -> (T, T) {
    let n = m.dim();
    let two = T::c(2.0);
    let (mut r, mut k) = (T::zero(), T::zero());
    for i in 0..n {
        let d = m.d()[i];
        let b = m.b()[(i, i)];
        let o: T = (0..n).filter(|&c| c != i).map(|c| m.b()[(i, c)]).sum();
        // max over s of −b s² + (b − d − o)s + o, attained at an endpoint or the vertex.
        let q = |s: T| -b * s * s + (b - d - o) * s + o;
        let mut top = q(T::zero()).max(q(T::one()));
        if b > T::zero() {
            let s = ((b - d - o) / (two * b)).max(T::zero()).min(T::one());
            top = top.max(q(s));
        }
        r = r.max(d.max(top));
        let row = (d + b + o).max((b - d).abs() + o).max((b - d - o).abs() + o);
        k = k.max(row);
    }
    (r, k)
}

/// Constants of the averaging theorem over all constituents and the
/// averaged system.
pub fn averaging_bound<T: Real>(model: &SwitchedSisModel<T>, kappa: &[T], period: T) -> Result<AveragingBound<T>> {
    if !(period > T::zero()) {
        return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
    }
    let avg = averaged_model(model, kappa)?;
    let (mut r, mut k) = box_constants(&avg);
    for m in model.models() {
        let (rj, kj) = box_constants(m);
        r = r.max(rj);
        k = k.max(kj);
    }
    let bound_value = period * r * (T::c(2.0) * k).exp() * (T::c(2.0) + k);
    Ok(AveragingBound { k, r, period, bound_value })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSign {
    Positive,
    Negative,
}

/// Searches the weight simplex for `μ(R)` of the requested sign with margin
/// `1e-6`: vertices, an edge grid of resolution 1/32, then Nelder–Mead on
/// `κ_j = z_j² / |z|²` for up to `budget` iterations.
pub fn find_combination<T: Real>(
    model: &SwitchedSisModel<T>,
    target: TargetSign,
    budget: usize,
) -> Result<Option<ConvexCombination<T>>> {
    let m = model.modes();
    let a = model.system_matrices();
    let sign = match target {
        TargetSign::Positive => T::one(),
        TargetSign::Negative => -T::one(),
    };
    // Score to maximise.
    let score = |kappa: &[T]| -> Option<T> {
        let mut r = Mat::zeros(model.dim());
        for (k, aj) in kappa.iter().zip(&a) {
            r = &r + &aj.scale(*k);
        }
        spectral_abscissa(&r).ok().map(|mu| sign * mu)
    };

    let mut grid: Vec<Vec<T>> = (0..m).map(|j| unit(m, j)).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            for s in 1..32 {
                let mut kappa = vec![T::zero(); m];
                kappa[i] = T::c(s as f64 / 32.0);
                kappa[j] = T::one() - kappa[i];
                grid.push(kappa);
            }
        }
    }
    if m > 2 {
        grid.push(vec![T::one() / T::from_usize_lossy(m); m]);
    }
    let scores: Vec<Option<T>> = grid.par_iter().map(|k| score(k)).collect();
    let mut best: Option<(Vec<T>, T)> = None;
    for (k, s) in grid.into_iter().zip(scores) {
        if let Some(s) = s {
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((k, s));
            }
        }
    }
    let Some(mut best) = best else { return Ok(None) };

    if m > 1 && budget > 0 {
        let to_kappa = |z: &[T]| -> Vec<T> {
            let s: T = z.iter().map(|&v| v * v).sum();
            z.iter().map(|&v| v * v / s).collect()
        };
        let f = |z: &[T]| score(&to_kappa(z)).map_or(T::neg_infinity(), |v| v);
        let z0: Vec<T> = best.0.iter().map(|&k| k.sqrt()).collect();
        let (z, v) = nelder_mead_max(&f, &z0, T::c(0.1), budget);
        let improvement = T::c(1e-12) * T::one().max(best.1.abs());
        if v > best.1 + improvement {
            best = (to_kappa(&z), v);
        }
    }
    if best.1 < T::c(SIGN_MARGIN) {
        return Ok(None);
    }
    ConvexCombination::new(model, &best.0).map(Some)
}

fn unit<T: Real>(m: usize, j: usize) -> Vec<T> {
    let mut e = vec![T::zero(); m];
    e[j] = T::one();
    e
}

/// Plain Nelder–Mead maximisation.
fn nelder_mead_max<T: Real>(f: &impl Fn(&[T]) -> T, x0: &[T], step: T, iterations: usize) -> (Vec<T>, T) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<T>, T)> = vec![(x0.to_vec(), f(x0))];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let half = T::c(0.5);
    let two = T::c(2.0);
    for _ in 0..iterations {
        // Descending by value; stable sort keeps the tie order deterministic.
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[0].1 - simplex[n].1;
        if spread.abs() < T::c(1e-14) {
            break;
        }
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &v) in centroid.iter_mut().zip(x) {
                *c += v / T::from_usize_lossy(n);
            }
        }
        let worst = simplex[n].clone();
        let along = |t: T| -> Vec<T> { centroid.iter().zip(&worst.0).map(|(&c, &w)| c + t * (c - w)).collect() };
        let xr = along(T::one());
        let fr = f(&xr);
        if fr > simplex[0].1 {
            let xe = along(two);
            let fe = f(&xe);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(-half);
            let fc = f(&xc);
            if fc > worst.1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<T> = best.iter().zip(&entry.0).map(|(&b, &v)| b + half * (v - b)).collect();
                    let v = f(&x);
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.swap_remove(0)
}
