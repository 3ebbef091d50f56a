//! Joint Lyapunov exponent bounds, extremal-norm approximations and
//! Lyapunov certificates for the disease-free equilibrium.

mod certify;
mod norm;

pub use certify::{
    bump, bump_derivative, psi_eps, psi_eps_derivative, verify_nonlinear_decrease, verify_nonstrict_lyapunov, DecreaseReport,
    NonstrictReport, NONSTRICT_TOL,
};
pub use norm::{build_extremal_norm, AbsoluteNorm, DualPair, ExtremalNormApprox, NormId, SupNorm, GROWTH_LIMIT};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posmat::{expm, spectral_abscissa, spectral_radius, Lu, Mat};
use crate::scalar::Real;
use crate::signals::{evolution, Segment, SignalKind, SwitchedSisModel, SwitchingSignal};

/// Products allowed in the block bound.
pub const BLOCK_BUDGET: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JleConfig {
    /// Longest candidate period for the lower-bound search.
    pub horizon: f64,
    /// Number of random periodic candidates.
    pub budget: usize,
    pub seed: u64,
    pub t_block: f64,
    pub depth: usize,
}

impl Default for JleConfig {
    fn default() -> Self {
        JleConfig { horizon: 4.0, budget: 256, seed: 0, t_block: 4.0, depth: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JleEstimate<T> {
    pub lower: T,
    pub upper: T,
    pub witness_signal: SwitchingSignal<T>,
    pub horizon: T,
    pub samples: usize,
    /// Norm-of-products value; diagnostic only, not a bound.
    pub block_estimate: T,
    /// Weights `w ≫ 0` with `A_j w <= upper·w` for every mode.
    pub envelope_weights: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound<T> {
    pub value: T,
    pub witness: SwitchingSignal<T>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound<T> {
    /// `max_i max_j (A_j w)_i / w_i`, an upper bound on the JLE.
    pub value: T,
    pub weights: Vec<T>,
    pub block_estimate: T,
}

/// Growth exponent `(1/T) log ρ(Φ_σ(T))` of a periodic signal.
fn periodic_growth<T: Real>(model: &SwitchedSisModel<T>, sig: &SwitchingSignal<T>) -> Option<T> {
    let period = sig.length();
    let phi = evolution(model, sig, period).ok()?.matrix;
    let rho = spectral_radius(&phi).ok()?;
    let g = rho.ln() / period;
    g.is_finite().then_some(g)
}

fn random_signal<T: Real>(rng: &mut ChaCha8Rng, m: usize, horizon: f64) -> SwitchingSignal<T> {
    let k = rng.gen_range(2..=4);
    let period = horizon * 2f64.powf(-10.0 * rng.gen::<f64>());
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut segments = Vec::with_capacity(k);
    let mut prev = usize::MAX;
    for r in raw {
        let mut mode = rng.gen_range(0..m);
        if mode == prev {
            mode = (mode + 1) % m;
        }
        prev = mode;
        segments.push(Segment { mode, duration: T::c(period * r / total) });
    }
    SwitchingSignal { kind: SignalKind::Periodic, segments }
}

fn pair_signal<T: Real>(a: usize, b: usize, weight: f64, period: f64) -> SwitchingSignal<T> {
    SwitchingSignal {
        kind: SignalKind::Periodic,
        segments: vec![
            Segment { mode: a, duration: T::c(weight * period) },
            Segment { mode: b, duration: T::c((1.0 - weight) * period) },
        ],
    }
}

/// Index of the largest value; ties go to the lowest index.
fn best_index<T: Real>(values: &[Option<T>]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (k, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
    }
    best
}

/// Lower bound on the JLE from periodic signals of period at most `horizon`.
///
/// Constant signals give `μ(A_j)` exactly. Switching candidates (fast
/// two-mode switching at several weights and periods, then `budget` random
/// 2–4 segment signals) are scored by `(1/T) log ρ(Φ_σ(T))`, and the best one
/// is refined by coordinate moves on its durations.
pub fn jle_lower_bound<T: Real>(model: &SwitchedSisModel<T>, horizon: T, budget: usize, seed: u64) -> Result<LowerBound<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let m = model.modes();
    let mut best = (T::neg_infinity(), SwitchingSignal::constant(0));
    for (j, a) in model.system_matrices().iter().enumerate() {
        let mu = spectral_abscissa(a)?;
        if mu > best.0 {
            best = (mu, SwitchingSignal::constant(j));
        }
    }
    let mut samples = m;
    if m == 1 {
        return Ok(LowerBound { value: best.0, witness: best.1, samples });
    }

    let h = horizon.to_f64_lossy();
    let mut candidates: Vec<SwitchingSignal<T>> = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            for &w in &[0.5, 0.25, 0.75] {
                for p in 0..=10 {
                    candidates.push(pair_signal(a, b, w, h * 2f64.powi(-p)));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.extend((0..budget).map(|_| random_signal(&mut rng, m, h)));
    let scores: Vec<Option<T>> = candidates.par_iter().map(|s| periodic_growth(model, s)).collect();
    samples += candidates.len();
    if let Some((k, v)) = best_index(&scores) {
        if v > best.0 {
            best = (v, candidates[k].clone());
        }
    }

    // Coordinate refinement of the durations.
    if best.1.segments.len() >= 2 {
        let mut step = 0.5f64;
        for _ in 0..40 {
            let base = &best.1;
            let mut moves = Vec::new();
            for k in 0..base.segments.len() {
                for factor in [1.0 + step, 1.0 / (1.0 + step)] {
                    let mut segs = base.segments.clone();
                    segs[k].duration *= T::c(factor);
                    let total: T = segs.iter().map(|s| s.duration).sum();
                    if total > horizon {
                        let scale = horizon / total;
                        segs.iter_mut().for_each(|s| s.duration *= scale);
                    }
                    moves.push(SwitchingSignal { kind: SignalKind::Periodic, segments: segs });
                }
            }
            let scores: Vec<Option<T>> = moves.par_iter().map(|s| periodic_growth(model, s)).collect();
            samples += moves.len();
            match best_index(&scores) {
                Some((k, v)) if v > best.0 => best = (v, moves[k].clone()),
                _ => {
                    step /= 2.0;
                    if step < 1e-3 {
                        break;
                    }
                }
            }
        }
    }
    Ok(LowerBound { value: best.0, witness: best.1, samples })
}

/// Ratio bound `max_i max_j (A_j w)_i / w_i` for `w ≫ 0`.
fn envelope_value<T: Real>(a: &[Mat<T>], w: &[T]) -> T {
    let mut lam = T::neg_infinity();
    for aj in a {
        for (i, v) in aj.mul_vec(w).into_iter().enumerate() {
            lam = lam.max(v / w[i]);
        }
    }
    lam
}

/// `w = ((μ(M) + δ)I − M)⁻¹·1`, which is positive for Metzler `M`.
fn resolvent_weights<T: Real>(m: &Mat<T>) -> Option<Vec<T>> {
    let mu = spectral_abscissa(m).ok()?;
    let scale = T::one().max(m.norm_inf());
    let mut delta = T::epsilon().sqrt() * scale;
    for _ in 0..6 {
        let shifted = m.scale(-T::one()).shift_diag(mu + delta);
        if let Ok(lu) = Lu::new(&shifted) {
            let w = lu.solve(&vec![T::one(); m.dim()]);
            if w.iter().all(|&v| v > T::zero() && v.is_finite()) {
                return Some(w);
            }
        }
        delta *= T::c(10.0);
    }
    None
}

/// Upper bound on the JLE with a certifying weight vector.
///
/// Each candidate `w` comes from the resolvent of a row selection matrix
/// (row `i` taken from some `A_j`); the selection is improved by policy
/// iteration toward the rows that attain the bound.
pub fn envelope_bound<T: Real>(model: &SwitchedSisModel<T>) -> Result<(T, Vec<T>)> {
    let a = model.system_matrices();
    let n = model.dim();
    let m = a.len();
    let ones = vec![T::one(); n];
    let mut best = (envelope_value(&a, &ones), ones);
    for start in 0..m {
        let mut select = vec![start; n];
        for _ in 0..30 {
            let mut rows = Vec::with_capacity(n * n);
            for (i, &j) in select.iter().enumerate() {
                rows.extend_from_slice(a[j].row(i));
            }
            let sel = Mat::from_vec(n, rows)?;
            let Some(w) = resolvent_weights(&sel) else { break };
            let lam = envelope_value(&a, &w);
            if lam < best.0 {
                best = (lam, w.clone());
            }
            let next: Vec<usize> = (0..n)
                .map(|i| {
                    let mut arg = (select[i], dot_row(&a[select[i]], i, &w) / w[i]);
                    for (j, aj) in a.iter().enumerate() {
                        let r = dot_row(aj, i, &w) / w[i];
                        if r > arg.1 {
                            arg = (j, r);
                        }
                    }
                    arg.0
                })
                .collect();
            if next == select {
                break;
            }
            select = next;
        }
    }
    let wmax = best.1.iter().copied().fold(T::zero(), T::max);
    let w = best.1.iter().map(|&v| v / wmax).collect();
    Ok((best.0, w))
}

fn dot_row<T: Real>(a: &Mat<T>, i: usize, w: &[T]) -> T {
    a.row(i).iter().zip(w).map(|(&x, &y)| x * y).sum()
}

/// `(1/(depth·t_block)) log max ‖e^{A_{j_depth} t_block} ⋯ e^{A_{j_1} t_block}‖∞`
/// over all `m^depth` products.
pub fn block_product_bound<T: Real>(model: &SwitchedSisModel<T>, t_block: T, depth: usize) -> Result<T> {
    if !(t_block > T::zero()) || depth == 0 {
        return Err(Error::InvalidInput("t_block must be positive and depth at least 1".into()));
    }
    let m = model.modes();
    let count = (m as f64).powi(depth as i32);
    if count > BLOCK_BUDGET {
        return Err(Error::Budget { count });
    }
    let blocks: Vec<Mat<T>> = model.system_matrices().iter().map(|a| expm(a, t_block)).collect::<Result<_>>()?;
    fn walk<T: Real>(blocks: &[Mat<T>], acc: &Mat<T>, left: usize) -> T {
        if left == 0 {
            return acc.norm_inf();
        }
        blocks.iter().map(|b| walk(blocks, &b.matmul(acc), left - 1)).fold(T::zero(), T::max)
    }
    let top = walk(&blocks, &Mat::identity(model.dim()), depth);
    Ok(top.ln() / (T::from_usize_lossy(depth) * t_block))
}

/// Upper JLE bound (`value`) plus the block-product diagnostic.
pub fn jle_upper_bound<T: Real>(model: &SwitchedSisModel<T>, t_block: T, depth: usize) -> Result<UpperBound<T>> {
    let block_estimate = block_product_bound(model, t_block, depth)?;
    let (value, weights) = envelope_bound(model)?;
    Ok(UpperBound { value, weights, block_estimate })
}

/// Both bounds with the witness of the lower one.
pub fn estimate_jle<T: Real>(model: &SwitchedSisModel<T>, cfg: &JleConfig) -> Result<JleEstimate<T>> {
    let horizon = T::c(cfg.horizon);
    let lower = jle_lower_bound(model, horizon, cfg.budget, cfg.seed)?;
    let upper = jle_upper_bound(model, T::c(cfg.t_block), cfg.depth)?;
    Ok(JleEstimate {
        lower: lower.value,
        // Both are rigorous; rounding can leave the upper value a few ulps low.
        upper: upper.value.max(lower.value),
        witness_signal: lower.witness,
        horizon,
        samples: lower.samples,
        block_estimate: upper.block_estimate,
        envelope_weights: upper.weights,
    })
}
