//! Fixed-step RK4 integration of the switched SIS system and its
//! linearisation, with steps aligned to switching instants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SisModel;
use crate::posmat::Mat;
use crate::scalar::Real;
use crate::signals::{Piece, SwitchedSisModel, SwitchingSignal};

/// Comparison slack used by the property harnesses.
pub const CHECK_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig<T> {
    /// Base step; each constant piece is split into `ceil(len / step)` equal steps.
    pub step: T,
    /// Drift outside the unit box that is clipped instead of reported.
    pub tol_drift: T,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        IntegratorConfig { step: T::c(1e-3), tol_drift: T::c(1e-9) }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_step(step: T) -> Self {
        IntegratorConfig { step, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > T::zero()) || !self.step.is_finite() {
            return Err(Error::InvalidInput(format!("integrator step must be positive, got {}", self.step)));
        }
        if !(self.tol_drift >= T::zero()) {
            return Err(Error::InvalidInput("tol_drift must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Sampled solution. `modes[k]` is `σ(times[k])` (right-continuous; the final
/// entry is the mode active just before `t_end`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub modes: Vec<usize>,
}

impl<T: Real> Trajectory<T> {
    pub fn terminal(&self) -> &[T] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest component over all stored states.
    pub fn min_component(&self) -> T {
        self.states.iter().flatten().copied().fold(T::infinity(), T::min)
    }
}

trait Field<T> {
    fn eval(&self, mode: usize, x: &[T], out: &mut [T]);
}

struct Nonlinear<'a, T: Real>(&'a [SisModel<T>]);

impl<T: Real> Field<T> for Nonlinear<'_, T> {
    fn eval(&self, mode: usize, x: &[T], out: &mut [T]) {
        let m = &self.0[mode];
        let b = m.b();
        for (i, o) in out.iter_mut().enumerate() {
            let bx: T = b.row(i).iter().zip(x).map(|(&bij, &xj)| bij * xj).sum();
            *o = -m.d()[i] * x[i] + (T::one() - x[i]) * bx;
        }
    }
}

struct Linear<T>(Vec<Mat<T>>);

impl<T: Real> Field<T> for Linear<T> {
    fn eval(&self, mode: usize, x: &[T], out: &mut [T]) {
        let a = &self.0[mode];
        for (i, o) in out.iter_mut().enumerate() {
            *o = a.row(i).iter().zip(x).map(|(&aij, &xj)| aij * xj).sum();
        }
    }
}

struct Rk4<T> {
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    fn new(n: usize) -> Self {
        Rk4 { k: std::array::from_fn(|_| vec![T::zero(); n]), tmp: vec![T::zero(); n] }
    }

    fn step(&mut self, f: &impl Field<T>, mode: usize, x: &mut [T], h: T) {
        let half = h / T::c(2.0);
        let [k1, k2, k3, k4] = &mut self.k;
        f.eval(mode, x, k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * k1[i];
        }
        f.eval(mode, &self.tmp, k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * k2[i];
        }
        f.eval(mode, &self.tmp, k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * k3[i];
        }
        f.eval(mode, &self.tmp, k4);
        let sixth = h / T::c(6.0);
        for i in 0..x.len() {
            x[i] += sixth * (k1[i] + T::c(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
    }
}

/// Clips `x` into the unit box when it is within `tol` of it.
fn clip_to_box<T: Real>(x: &mut [T], tol: T, t: T) -> Result<()> {
    for (i, v) in x.iter_mut().enumerate() {
        if *v < T::zero() {
            if *v < -tol || !v.is_finite() {
                return Err(Error::InvarianceDrift { time: t.to_f64_lossy(), component: i, value: v.to_f64_lossy() });
            }
            *v = T::zero();
        } else if *v > T::one() {
            if *v > T::one() + tol || !v.is_finite() {
                return Err(Error::InvarianceDrift { time: t.to_f64_lossy(), component: i, value: v.to_f64_lossy() });
            }
            *v = T::one();
        }
    }
    Ok(())
}

/// Shared driver: calls `visit(t, x, mode)` at time 0 and after every step.
fn drive<T: Real>(
    f: &impl Field<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
    clip: bool,
    mut visit: impl FnMut(T, &[T], usize),
) -> Result<Vec<T>> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    visit(T::zero(), &x, sig.evaluate(T::zero())?);
    let mut pieces = sig.pieces(t_end)?.peekable();
    while let Some(p) = pieces.next() {
        let next_mode = pieces.peek().map_or(p.mode, |q| q.mode);
        let len = p.t1 - p.t0;
        let steps = (len / cfg.step).ceil().to_usize().unwrap_or(1).max(1);
        let h = len / T::from_usize_lossy(steps);
        for k in 1..=steps {
            rk.step(f, p.mode, &mut x, h);
            let t = if k == steps { p.t1 } else { p.t0 + h * T::from_usize_lossy(k) };
            if clip {
                clip_to_box(&mut x, cfg.tol_drift, t)?;
            } else if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("linear trajectory overflowed at t={t}")));
            }
            visit(t, &x, if k == steps { next_mode } else { p.mode });
        }
    }
    Ok(x)
}

/// Advances `x` in place over explicit constant pieces (nonlinear field,
/// box clipping). The pieces must be contiguous.
pub fn advance_pieces<T: Real>(
    model: &SwitchedSisModel<T>,
    pieces: &[Piece<T>],
    x: &mut [T],
    cfg: &IntegratorConfig<T>,
) -> Result<()> {
    cfg.validate()?;
    let f = Nonlinear(model.models());
    let mut rk = Rk4::new(x.len());
    for p in pieces {
        if p.mode >= model.modes() {
            return Err(Error::InvalidInput(format!("piece references mode {} of {}", p.mode, model.modes())));
        }
        let len = p.t1 - p.t0;
        if !(len > T::zero()) {
            continue;
        }
        let steps = (len / cfg.step).ceil().to_usize().unwrap_or(1).max(1);
        let h = len / T::from_usize_lossy(steps);
        for k in 1..=steps {
            rk.step(&f, p.mode, x, h);
            clip_to_box(x, cfg.tol_drift, p.t0 + h * T::from_usize_lossy(k))?;
        }
    }
    Ok(())
}

fn check_inputs<T: Real>(model: &SwitchedSisModel<T>, sig: &SwitchingSignal<T>, x0: &[T], t_end: T) -> Result<()> {
    model.check_state(x0)?;
    model.check_signal(sig)?;
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be nonnegative, got {t_end}")));
    }
    Ok(())
}

fn check_in_box<T: Real>(x0: &[T]) -> Result<()> {
    match x0.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
        Some(i) => Err(Error::InvalidInput(format!("initial state component {i} = {} outside [0, 1]", x0[i]))),
        None => Ok(()),
    }
}

fn collect<T: Real>(run: impl FnOnce(&mut dyn FnMut(T, &[T], usize)) -> Result<Vec<T>>) -> Result<Trajectory<T>> {
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new(), modes: Vec::new() };
    run(&mut |t, x, mode| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.modes.push(mode);
    })?;
    Ok(traj)
}

/// Solves `ẋ = f_{σ(t)}(x)` from `x0 ∈ Σ_n` on `[0, t_end]`, storing every step.
pub fn integrate<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    check_inputs(model, sig, x0, t_end)?;
    check_in_box(x0)?;
    let f = Nonlinear(model.models());
    collect(|visit| drive(&f, sig, x0, t_end, cfg, true, visit))
}

/// Terminal state of [`integrate`] without storing the path.
pub fn flow<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Vec<T>> {
    check_inputs(model, sig, x0, t_end)?;
    check_in_box(x0)?;
    drive(&Nonlinear(model.models()), sig, x0, t_end, cfg, true, |_, _, _| {})
}

/// Like [`flow`], but calls `visit(t, x)` at every step.
pub fn flow_visit<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
    mut visit: impl FnMut(T, &[T]),
) -> Result<Vec<T>> {
    check_inputs(model, sig, x0, t_end)?;
    check_in_box(x0)?;
    drive(&Nonlinear(model.models()), sig, x0, t_end, cfg, true, |t, x, _| visit(t, x))
}

/// Solves the linearisation `ẋ = A_{σ(t)} x`.
pub fn integrate_linear<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    check_inputs(model, sig, x0, t_end)?;
    let f = Linear(model.system_matrices());
    collect(|visit| drive(&f, sig, x0, t_end, cfg, false, visit))
}

pub fn flow_linear<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Vec<T>> {
    check_inputs(model, sig, x0, t_end)?;
    drive(&Linear(model.system_matrices()), sig, x0, t_end, cfg, false, |_, _, _| {})
}

/// Outcome of an ordering check between two trajectories on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport<T> {
    pub passed: bool,
    /// Largest `lower_i(t) − upper_i(t)`; nonpositive when the ordering holds exactly.
    pub max_violation: T,
    pub worst_time: T,
    pub slack: T,
    pub grid_points: usize,
}

fn ordering<T: Real>(lower: &Trajectory<T>, upper: &Trajectory<T>) -> OrderingReport<T> {
    let mut worst = (T::neg_infinity(), T::zero());
    for ((t, a), b) in lower.times.iter().zip(&lower.states).zip(&upper.states) {
        for (ai, bi) in a.iter().zip(b) {
            let gap = *ai - *bi;
            if gap > worst.0 {
                worst = (gap, *t);
            }
        }
    }
    let slack = T::c(CHECK_SLACK);
    OrderingReport { passed: worst.0 <= slack, max_violation: worst.0, worst_time: worst.1, slack, grid_points: lower.len() }
}

fn check_order<T: Real>(x0: &[T], y0: &[T]) -> Result<()> {
    if x0.len() != y0.len() {
        return Err(Error::DimensionMismatch { expected: x0.len(), found: y0.len() });
    }
    if x0.iter().zip(y0).any(|(&a, &b)| !(a >= T::zero() && a <= b)) {
        return Err(Error::InvalidInput("comparison requires 0 <= x0 <= y0".into()));
    }
    Ok(())
}

/// Checks that the nonlinear solution from `x0` lies below the linear solution
/// from `y0` at every grid time.
pub fn check_comparison<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    y0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<OrderingReport<T>> {
    check_order(x0, y0)?;
    let nl = integrate(model, sig, x0, t_end, cfg)?;
    let lin = integrate_linear(model, sig, y0, t_end, cfg)?;
    Ok(ordering(&nl, &lin))
}

/// Checks that the nonlinear flow preserves `x0 <= y0` along the trajectories.
pub fn check_monotone<T: Real>(
    model: &SwitchedSisModel<T>,
    sig: &SwitchingSignal<T>,
    x0: &[T],
    y0: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<OrderingReport<T>> {
    check_order(x0, y0)?;
    check_in_box(y0)?;
    let lo = integrate(model, sig, x0, t_end, cfg)?;
    let hi = integrate(model, sig, y0, t_end, cfg)?;
    Ok(ordering(&lo, &hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Decreasing,
    Increasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalReport<T> {
    pub direction: Direction,
    pub passed: bool,
    /// Largest step against the expected direction over the sampled grid.
    pub max_violation: T,
    pub samples: usize,
}

/// For `f(w) ≪ 0` (resp. `≫ 0`) the autonomous trajectory from `w` decreases
/// (resp. increases) in every component. Samples the trajectory on `[0, t_end]`
/// at spacing `sample_dt`.
pub fn check_directional_monotone<T: Real>(
    model: &SisModel<T>,
    w: &[T],
    t_end: T,
    sample_dt: T,
    cfg: &IntegratorConfig<T>,
) -> Result<DirectionalReport<T>> {
    let f = model.vector_field(w)?;
    let direction = if f.iter().all(|&v| v < T::zero()) {
        Direction::Decreasing
    } else if f.iter().all(|&v| v > T::zero()) {
        Direction::Increasing
    } else {
        return Err(Error::Hypothesis("lemma precondition fails: f(w) is neither strictly negative nor strictly positive".into()));
    };
    if !(sample_dt > T::zero()) {
        return Err(Error::InvalidInput("sample spacing must be positive".into()));
    }
    let sys = SwitchedSisModel::single(model.clone());
    let mut samples = vec![w.to_vec()];
    let mut next = sample_dt;
    flow_visit(&sys, &SwitchingSignal::constant(0), w, t_end, cfg, |t, x| {
        if t >= next - cfg.step * T::c(1e-6) {
            samples.push(x.to_vec());
            next += sample_dt;
        }
    })?;
    let sign = if direction == Direction::Decreasing { T::one() } else { -T::one() };
    let mut max_violation = T::neg_infinity();
    for pair in samples.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            max_violation = max_violation.max(sign * (*b - *a));
        }
    }
    Ok(DirectionalReport { direction, passed: max_violation < T::zero(), max_violation, samples: samples.len() })
}
