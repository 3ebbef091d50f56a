use serde::{Deserialize, Serialize};

use super::{ConvexCombination, MAX_HALVINGS, SIGN_MARGIN};
use crate::error::{Error, Result};
use crate::posmat::{is_irreducible, spectral_abscissa, vec_norm_inf, Lu, Mat};
use crate::scalar::Real;
use crate::signals::{SwitchedSisModel, SwitchingSignal};
use crate::simulate::{flow, flow_visit, IntegratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persistence<T> {
    pub signal: SwitchingSignal<T>,
    pub period: T,
    /// Start point `v ≫ 0` with `f̂(v) ≫ 0` and `x(1, v, σ) ≫ v`.
    pub v: Vec<T>,
    /// `min_i min_{t ∈ [0,1]} x_i(t, v, σ)` on the integration grid.
    pub delta: T,
    pub advance: Vec<T>,
}

/// Builds a κ-periodic signal with period `2^{-k}` whose trajectory from a
/// suitable `v ≫ 0` satisfies `x(1, v, σ) ≫ v`; by monotonicity the orbit
/// from `v` then stays above its minimum over the first unit interval.
pub fn persistence_construction<T: Real>(
    model: &SwitchedSisModel<T>,
    kappa: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<Persistence<T>> {
    let comb = ConvexCombination::new(model, kappa)?;
    if comb.abscissa < T::c(SIGN_MARGIN) {
        return Err(Error::Hypothesis(format!("μ(R) = {} is not positive", comb.abscissa)));
    }
    let v = expanding_vector(&comb.r, comb.abscissa)?;
    // f̂(cv) = c(Rv − c·diag(v)B̂v) ≫ 0 iff c < (Rv)_i / (v_i (B̂v)_i) for all i.
    let rv = comb.r.mul_vec(&v);
    let bv = comb.b_hat.mul_vec(&v);
    let c_max = (0..v.len())
        .filter(|&i| bv[i] > T::zero())
        .map(|i| rv[i] / (v[i] * bv[i]))
        .fold(T::infinity(), T::min);
    let c = T::one().min(c_max / T::c(2.0));
    let v: Vec<T> = v.iter().map(|&x| x * c).collect();

    let mut period = T::one();
    for _ in 0..=MAX_HALVINGS {
        let signal = SwitchingSignal::periodic_from_weights(kappa, period)?;
        let mut delta = v.iter().copied().fold(T::infinity(), T::min);
        let advance = flow_visit(model, &signal, &v, T::one(), cfg, |_, x| {
            delta = x.iter().copied().fold(delta, T::min);
        })?;
        if advance.iter().zip(&v).all(|(a, b)| a > b) && delta > T::zero() {
            return Ok(Persistence { signal, period, v, delta, advance });
        }
        period /= T::c(2.0);
    }
    Err(Error::Hypothesis(format!("no period down to 2^-{MAX_HALVINGS} gives x(1, v) >> v; margin of μ(R) too small")))
}

/// `v = (sI − R)⁻¹·1` for `s` slightly above `μ(R) > 0`, normalised to `max v = 1`,
/// chosen so that `Rv ≫ 0`.
fn expanding_vector<T: Real>(r: &Mat<T>, mu: T) -> Result<Vec<T>> {
    let n = r.dim();
    let mut gap = mu;
    for _ in 0..60 {
        gap /= T::c(2.0);
        let s = mu + gap;
        let Ok(lu) = Lu::new(&r.scale(-T::one()).shift_diag(s)) else { continue };
        let v = lu.solve(&vec![T::one(); n]);
        if v.iter().any(|&x| !(x > T::zero())) {
            continue;
        }
        let top = v.iter().copied().fold(T::zero(), T::max);
        let v: Vec<T> = v.iter().map(|&x| x / top).collect();
        if r.mul_vec(&v).iter().all(|&x| x > T::zero()) {
            return Ok(v);
        }
    }
    Err(Error::Hypothesis("no v >> 0 with Rv >> 0; R is not positively expanding".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitMethod {
    Newton,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit<T> {
    pub x_star: Vec<T>,
    /// Always 1: the signal period divides 1.
    pub period: T,
    pub signal_period: T,
    pub signal: SwitchingSignal<T>,
    /// `‖x(1, x*, σ) − x*‖∞`.
    pub residual: T,
    /// `min_i min_{t ∈ [0,1]} x_i(t, x*, σ)`.
    pub interior_margin: T,
    /// Equilibrium of the averaged system used as seed.
    pub seed: Vec<T>,
    pub method: OrbitMethod,
    pub iterations: usize,
}

/// Finds a 1-periodic orbit of the switched system for the κ-periodic signal
/// by solving `x(1, x, σ) = x` near the endemic equilibrium of the averaged
/// system.
pub fn periodic_orbit<T: Real>(
    model: &SwitchedSisModel<T>,
    kappa: &[T],
    tol: T,
    cfg: &IntegratorConfig<T>,
) -> Result<PeriodicOrbit<T>> {
    for (j, a) in model.system_matrices().iter().enumerate() {
        let mu = spectral_abscissa(a)?;
        if !(mu < T::zero()) {
            return Err(Error::Hypothesis(format!("mode {j} has μ(A) = {mu} >= 0; every constituent must be stable")));
        }
    }
    let comb = ConvexCombination::new(model, kappa)?;
    if comb.abscissa < T::c(SIGN_MARGIN) {
        return Err(Error::Hypothesis(format!("μ(R) = {} is not positive", comb.abscissa)));
    }
    if !is_irreducible(&comb.b_hat) {
        return Err(Error::Reducible("averaged infection matrix is reducible".into()));
    }
    let seed = comb
        .averaged()?
        .endemic_equilibrium(T::c(1e-13).max(T::epsilon() * T::c(64.0)))?
        .ok_or_else(|| Error::Hypothesis("averaged system has no endemic equilibrium".into()))?;
    let dist = seed.iter().fold(T::infinity(), |m, &x| m.min(x).min(T::one() - x));

    let mut period = T::one();
    let mut signal = SwitchingSignal::periodic_from_weights(kappa, period)?;
    for k in 0..=MAX_HALVINGS {
        signal = SwitchingSignal::periodic_from_weights(kappa, period)?;
        let gap = diff_norm(&flow(model, &signal, &seed, T::one(), cfg)?, &seed);
        if gap < dist / T::c(2.0) {
            break;
        }
        if k == MAX_HALVINGS {
            return Err(Error::Hypothesis("averaging gap stays above half the distance to the boundary".into()));
        }
        period /= T::c(2.0);
    }

    let p = |x: &[T]| flow(model, &signal, x, T::one(), cfg);
    let (x_star, residual, method, iterations) = match newton(&p, &seed, tol)? {
        Ok(found) => found,
        Err(last) => picard(&p, &seed, tol, last)?,
    };

    let mut interior_margin = T::infinity();
    flow_visit(model, &signal, &x_star, T::one(), cfg, |_, x| {
        interior_margin = x.iter().copied().fold(interior_margin, T::min);
    })?;
    interior_margin = x_star.iter().copied().fold(interior_margin, T::min);
    if !(interior_margin > T::zero()) {
        return Err(Error::Hypothesis("orbit touches the boundary of the positive orthant".into()));
    }
    for (j, m) in model.models().iter().enumerate() {
        let f = vec_norm_inf(&m.vector_field(&x_star)?);
        if f <= T::c(10.0) * tol {
            return Err(Error::Hypothesis(format!("orbit point is an equilibrium of mode {j}")));
        }
    }
    Ok(PeriodicOrbit {
        x_star,
        period: T::one(),
        signal_period: period,
        signal,
        residual,
        interior_margin,
        seed,
        method,
        iterations,
    })
}

fn diff_norm<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

type Found<T> = (Vec<T>, T, OrbitMethod, usize);

/// Damped Newton on `G(x) = P(x) − x` with a forward-difference Jacobian.
/// The inner `Err` carries the last residual on stagnation.
fn newton<T: Real>(p: &impl Fn(&[T]) -> Result<Vec<T>>, x0: &[T], tol: T) -> Result<std::result::Result<Found<T>, T>> {
    let n = x0.len();
    let h = T::c(1e-6);
    let mut x = x0.to_vec();
    let mut px = p(&x)?;
    let mut res = diff_norm(&px, &x);
    for it in 0..50 {
        if res <= tol {
            return Ok(Ok((x, res, OrbitMethod::Newton, it)));
        }
        let mut jac = Mat::zeros(n);
        for k in 0..n {
            let mut xh = x.clone();
            // Step inward when close to the upper face.
            let hk = if xh[k] + h > T::one() { -h } else { h };
            xh[k] += hk;
            let ph = p(&xh)?;
            for i in 0..n {
                jac[(i, k)] = (ph[i] - px[i]) / hk;
            }
            jac[(k, k)] -= T::one();
        }
        let g: Vec<T> = px.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let Ok(lu) = Lu::new(&jac) else { return Ok(Err(res)) };
        let step = lu.solve(&g);
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&a, &s)| a - lambda * s).collect();
            if trial.iter().all(|&v| v > T::zero() && v <= T::one()) {
                let pt = p(&trial)?;
                let rt = diff_norm(&pt, &trial);
                if rt < res {
                    x = trial;
                    px = pt;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lambda /= T::c(2.0);
        }
        if !accepted {
            return Ok(if res <= tol { Ok((x, res, OrbitMethod::Newton, it)) } else { Err(res) });
        }
    }
    Ok(if res <= tol { Ok((x, res, OrbitMethod::Newton, 50)) } else { Err(res) })
}

fn picard<T: Real>(p: &impl Fn(&[T]) -> Result<Vec<T>>, x0: &[T], tol: T, newton_residual: T) -> Result<Found<T>> {
    const MAX: usize = 10_000;
    let mut x = x0.to_vec();
    let mut res = T::infinity();
    for it in 0..MAX {
        let px = p(&x)?;
        res = diff_norm(&px, &x);
        if res <= tol {
            return Ok((x, res, OrbitMethod::Picard, it));
        }
        x = px;
    }
    Err(Error::SolverFailure {
        what: format!("periodic orbit solve (Newton residual {:e}, then Picard)", newton_residual.to_f64_lossy()),
        residual: res.to_f64_lossy(),
    })
}
