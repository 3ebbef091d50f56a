use serde::{Deserialize, Serialize};

use super::{find_combination, TargetSign, MAX_HALVINGS};
use crate::error::{Error, Result};
use crate::posmat::{solve, spectral_abscissa};
use crate::scalar::Real;
use crate::signals::{evolution, matrix_power, SwitchedSisModel, SwitchingSignal};
use crate::simulate::{flow_visit, IntegratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stabilization<T> {
    pub signal: SwitchingSignal<T>,
    pub kappa: Vec<T>,
    pub period: T,
    /// `max_i (Φ_σ(T)v)_i / v_i < 1`.
    pub alpha: T,
    /// `v = −R⁻¹·1`, scaled so that `min v_i > 1`.
    pub v: Vec<T>,
    /// Largest `(Φ_σ(kT)v)_i / (α^k v_i) − 1` for `k = 1..=10`.
    pub iterated_defect: T,
    /// `C` in `‖x(t)‖∞ <= C α^⌊t/T⌋` for `x(0) = 1`.
    pub envelope_constant: T,
    pub envelope_ok: bool,
    pub horizon: T,
    /// `‖x(horizon)‖∞` from the all-ones start.
    pub terminal_norm: T,
}

/// Periodic switching law that makes the disease-free equilibrium globally
/// stable when every mode is unstable but some convex combination `R` of the
/// linearisations is Hurwitz.
pub fn stabilize<T: Real>(
    model: &SwitchedSisModel<T>,
    horizon: T,
    budget: usize,
    cfg: &IntegratorConfig<T>,
) -> Result<Stabilization<T>> {
    let a = model.system_matrices();
    for (j, aj) in a.iter().enumerate() {
        let mu = spectral_abscissa(aj)?;
        if !(mu > T::zero()) {
            return Err(Error::Hypothesis(format!("mode {j} has μ(A) = {mu} <= 0; every constituent must be unstable")));
        }
    }
    let comb = find_combination(model, TargetSign::Negative, budget)?
        .ok_or_else(|| Error::Hypothesis("no Hurwitz convex combination of the modes".into()))?;
    let n = model.dim();
    let v = solve(&comb.r, &vec![-T::one(); n])?;
    let vmin = v.iter().copied().fold(T::infinity(), T::min);
    if !(vmin > T::zero()) {
        return Err(Error::Hypothesis("−R⁻¹·1 is not strictly positive".into()));
    }
    let v: Vec<T> = v.iter().map(|&x| x * T::c(1.5) / vmin).collect();

    let mut period = T::one();
    let mut found = None;
    for _ in 0..=MAX_HALVINGS {
        let signal = SwitchingSignal::periodic_from_weights(&comb.kappa, period)?;
        let phi = evolution(model, &signal, period)?.matrix;
        let pv = phi.mul_vec(&v);
        let alpha = pv.iter().zip(&v).fold(T::zero(), |m, (&p, &x)| m.max(p / x));
        if alpha < T::one() {
            found = Some((signal, phi, alpha));
            break;
        }
        period /= T::c(2.0);
    }
    let (signal, phi, alpha) = found.ok_or(Error::NonConvergence { what: "stabilizing period search", iterations: MAX_HALVINGS + 1 })?;

    let mut iterated_defect = T::neg_infinity();
    for k in 1..=10 {
        let pk = matrix_power(&phi, k).mul_vec(&v);
        let ak = alpha.powi(k as i32);
        for (p, x) in pk.iter().zip(&v) {
            iterated_defect = iterated_defect.max(*p / (ak * *x) - T::one());
        }
    }

    // x(t) <= Φ(t)·1 <= Φ(s)Φ(kT) v / min v <= e^{‖A‖ s} α^k max v / min v.
    let growth = a.iter().map(|m| m.norm_inf()).fold(T::zero(), T::max);
    let vmax = v.iter().copied().fold(T::zero(), T::max);
    let vmin = v.iter().copied().fold(T::infinity(), T::min);
    let envelope_constant = (growth * period).exp() * vmax / vmin;
    let ones = vec![T::one(); n];
    let mut envelope_ok = true;
    let slack = T::c(1e-9);
    let terminal = flow_visit(model, &signal, &ones, horizon, cfg, |t, x| {
        let k = (t / period).floor();
        let bound = envelope_constant * alpha.powf(k);
        let norm = x.iter().copied().fold(T::zero(), T::max);
        if norm > bound * (T::one() + slack) + slack {
            envelope_ok = false;
        }
    })?;
    let terminal_norm = terminal.iter().copied().fold(T::zero(), T::max);
    Ok(Stabilization {
        signal,
        kappa: comb.kappa,
        period,
        alpha,
        v,
        iterated_defect,
        envelope_constant,
        envelope_ok,
        horizon,
        terminal_norm,
    })
}
