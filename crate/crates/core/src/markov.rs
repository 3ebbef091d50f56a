//! Markov jump switching: path sampling, the moment system and the
//! L1-stability test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posmat::{expm, kron_with_identity, neg_inverse_nonpositive, solve, spectral_abscissa, Mat, MetzlerMatrix};
use crate::scalar::Real;
use crate::signals::{Piece, Segment, SignalKind, SwitchedSisModel, SwitchingSignal};
use crate::simulate::{advance_pieces, IntegratorConfig};

/// Paths per summation chunk in the Monte Carlo reduction.
pub const CHUNK: usize = 256;
/// Smallest accepted Monte Carlo sample.
pub const MIN_PATHS: usize = 100;
/// Normal quantile for the 95% intervals.
pub const Z95: f64 = 1.959963984540054;

/// Transition rates: a piecewise-constant schedule of generators `Π(t)` and a
/// constant Metzler bound `Π̄ >= Π(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec<T> {
    /// `(start time, Π)` pairs; the first start is 0 and starts increase.
    schedule: Vec<(T, Mat<T>)>,
    pi_bar: Mat<T>,
}

fn check_generator<T: Real>(pi: &Mat<T>) -> Result<()> {
    let m = pi.dim();
    let scale = T::one().max(pi.max_abs());
    for i in 0..m {
        for j in 0..m {
            if i != j && pi[(i, j)] < T::zero() {
                return Err(Error::InvalidInput(format!("rate pi[{i}][{j}] = {} is negative", pi[(i, j)])));
            }
        }
        let sum: T = pi.row(i).iter().copied().sum();
        if sum.abs() > T::c(1e-12) * scale {
            return Err(Error::InvalidInput(format!("row {i} of the rate matrix sums to {sum}, expected 0")));
        }
    }
    Ok(())
}

impl<T: Real> MarkovSpec<T> {
    /// Constant rates with `Π̄ = Π`.
    pub fn constant(pi: Mat<T>) -> Result<Self> {
        Self::new(vec![(T::zero(), pi.clone())], pi)
    }

    pub fn new(schedule: Vec<(T, Mat<T>)>, pi_bar: Mat<T>) -> Result<Self> {
        let first = schedule.first().ok_or_else(|| Error::InvalidInput("empty rate schedule".into()))?;
        if first.0 != T::zero() {
            return Err(Error::InvalidInput("rate schedule must start at t = 0".into()));
        }
        let m = pi_bar.dim();
        if !crate::posmat::is_metzler(&pi_bar) {
            return Err(Error::InvalidInput("pi_bar must be Metzler".into()));
        }
        for (k, (t, pi)) in schedule.iter().enumerate() {
            if pi.dim() != m {
                return Err(Error::DimensionMismatch { expected: m, found: pi.dim() });
            }
            if k > 0 && !(*t > schedule[k - 1].0) {
                return Err(Error::InvalidInput("schedule start times must increase".into()));
            }
            check_generator(pi)?;
            if !pi.le_entrywise(&pi_bar) {
                return Err(Error::InvalidInput(format!("rate matrix starting at t = {t} exceeds pi_bar")));
            }
        }
        Ok(MarkovSpec { schedule, pi_bar })
    }

    pub fn states(&self) -> usize {
        self.pi_bar.dim()
    }

    pub fn pi_bar(&self) -> &Mat<T> {
        &self.pi_bar
    }

    pub fn schedule(&self) -> &[(T, Mat<T>)] {
        &self.schedule
    }

    pub fn is_constant(&self) -> bool {
        self.schedule.len() == 1
    }

    /// `Π(t)`.
    pub fn pi_at(&self, t: T) -> &Mat<T> {
        let k = self.schedule.partition_point(|(s, _)| *s <= t).max(1) - 1;
        &self.schedule[k].1
    }
}

/// A sampled realisation of the switching process on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpPath<T> {
    pub jump_times: Vec<T>,
    /// `states[0]` is the initial state; `states[k + 1]` holds after `jump_times[k]`.
    pub states: Vec<usize>,
    pub horizon: T,
}

impl<T: Real> JumpPath<T> {
    pub fn state_at(&self, t: T) -> usize {
        self.states[self.jump_times.partition_point(|&s| s <= t)]
    }

    /// Constant pieces clipped to `[a, b]`.
    pub fn pieces_between(&self, a: T, b: T) -> Vec<Piece<T>> {
        let mut out = Vec::new();
        let mut k = self.jump_times.partition_point(|&s| s <= a);
        let mut t0 = a;
        while t0 < b {
            let t1 = self.jump_times.get(k).copied().unwrap_or(b).min(b);
            if t1 > t0 {
                out.push(Piece { mode: self.states[k], t0, t1 });
            }
            t0 = t1;
            k += 1;
        }
        out
    }

    pub fn to_signal(&self) -> Result<SwitchingSignal<T>> {
        let mut segments = Vec::with_capacity(self.states.len());
        let mut t0 = T::zero();
        for (k, &s) in self.states.iter().enumerate() {
            let t1 = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            if t1 > t0 {
                segments.push(Segment { mode: s, duration: t1 - t0 });
            }
            t0 = t1;
        }
        SwitchingSignal::new(SignalKind::PiecewiseConstant, segments)
    }

    /// Time spent in each state.
    pub fn occupation(&self, m: usize) -> Vec<T> {
        let mut occ = vec![T::zero(); m];
        let mut t0 = T::zero();
        for (k, &s) in self.states.iter().enumerate() {
            let t1 = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            occ[s] += t1 - t0;
            t0 = t1;
        }
        occ
    }
}

fn exp_sample<T: Real>(rng: &mut ChaCha8Rng, rate: T) -> T {
    let u: f64 = 1.0 - rng.gen::<f64>();
    T::c(-u.ln()) / rate
}

/// Index `j != i` drawn with probability `row[j] / total`.
fn pick<T: Real>(rng: &mut ChaCha8Rng, row: &[T], i: usize, total: T) -> usize {
    let target = T::c(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut last = i;
    for (j, &r) in row.iter().enumerate() {
        if j == i || r <= T::zero() {
            continue;
        }
        acc += r;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

fn sample_path<T: Real>(spec: &MarkovSpec<T>, sigma0: usize, horizon: T, rng: &mut ChaCha8Rng) -> JumpPath<T> {
    let mut t = T::zero();
    let mut state = sigma0;
    let mut path = JumpPath { jump_times: Vec::new(), states: vec![sigma0], horizon };
    if spec.is_constant() {
        let pi = &spec.schedule[0].1;
        loop {
            let rate = -pi[(state, state)];
            if !(rate > T::zero()) {
                break;
            }
            t += exp_sample(rng, rate);
            if t >= horizon {
                break;
            }
            state = pick(rng, pi.row(state), state, rate);
            path.jump_times.push(t);
            path.states.push(state);
        }
        return path;
    }
    // Thinning against the off-diagonal row sums of Π̄.
    loop {
        let bound: T = (0..spec.states()).filter(|&j| j != state).map(|j| spec.pi_bar[(state, j)]).sum();
        if !(bound > T::zero()) {
            break;
        }
        t += exp_sample(rng, bound);
        if t >= horizon {
            break;
        }
        let pi = spec.pi_at(t);
        let rate = -pi[(state, state)];
        if T::c(rng.gen::<f64>()) * bound < rate {
            state = pick(rng, pi.row(state), state, rate);
            path.jump_times.push(t);
            path.states.push(state);
        }
    }
    path
}

/// Samples one path: exact Gillespie steps for constant rates, thinning for a
/// schedule.
pub fn simulate_jump<T: Real>(spec: &MarkovSpec<T>, sigma0: usize, horizon: T, seed: u64) -> Result<JumpPath<T>> {
    if sigma0 >= spec.states() {
        return Err(Error::InvalidInput(format!("initial state {sigma0} out of range")));
    }
    if !(horizon >= T::zero()) {
        return Err(Error::InvalidInput("horizon must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_path(spec, sigma0, horizon, &mut rng))
}

/// `𝒜_Π = blockdiag(−D_i + B_i) + Πᵀ ⊗ I`: block `(i, j)` carries `π_ji I`,
/// matching `ξ̇_i = A_i ξ_i + Σ_j π_ji ξ_j`.
pub fn build_moment_matrix<T: Real>(model: &SwitchedSisModel<T>, pi: &Mat<T>) -> Result<Mat<T>> {
    let m = model.modes();
    if pi.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, found: pi.dim() });
    }
    let n = model.dim();
    let mut out = kron_with_identity(&pi.transpose(), n);
    for (b, a) in model.system_matrices().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                out[(b * n + i, b * n + j)] += a[(i, j)];
            }
        }
    }
    Ok(out)
}

/// `ξ(0) = e_{σ0} ⊗ x0`.
pub fn initial_moments<T: Real>(m: usize, sigma0: usize, x0: &[T]) -> Vec<T> {
    let n = x0.len();
    let mut xi = vec![T::zero(); m * n];
    xi[sigma0 * n..(sigma0 + 1) * n].copy_from_slice(x0);
    xi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory<T> {
    pub times: Vec<T>,
    /// `ξ(t_k)` stacked as `(ξ_1, .., ξ_m)`.
    pub xi: Vec<Vec<T>>,
}

fn check_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() || grid[0] < T::zero() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// Solves the majorant `ξ̇ = 𝒜_{Π(t)} ξ` exactly on the grid, with breaks at
/// schedule changes.
pub fn integrate_linear_moment_bound<T: Real>(
    model: &SwitchedSisModel<T>,
    spec: &MarkovSpec<T>,
    xi0: &[T],
    grid: &[T],
) -> Result<MomentTrajectory<T>> {
    check_grid(grid)?;
    let mn = model.modes() * model.dim();
    if xi0.len() != mn {
        return Err(Error::DimensionMismatch { expected: mn, found: xi0.len() });
    }
    if xi0.iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidInput("xi0 must be nonnegative".into()));
    }
    let mats: Vec<Mat<T>> = spec.schedule.iter().map(|(_, pi)| build_moment_matrix(model, pi)).collect::<Result<_>>()?;
    let mut t = T::zero();
    let mut xi = xi0.to_vec();
    let mut out = MomentTrajectory { times: Vec::new(), xi: Vec::new() };
    for &g in grid {
        while t < g {
            let k = spec.schedule.partition_point(|(s, _)| *s <= t).max(1) - 1;
            let next = spec.schedule.get(k + 1).map_or(g, |(s, _)| s.min(g));
            xi = expm(&mats[k], next - t)?.mul_vec(&xi);
            t = next;
        }
        out.times.push(g);
        out.xi.push(xi.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates<T> {
    pub times: Vec<T>,
    /// `ξ̂(t_k)`, length `m·n` each.
    pub xi_mean: Vec<Vec<T>>,
    /// 95% half-widths of `ξ̂`.
    pub xi_ci: Vec<Vec<T>>,
    /// Estimates of `E x(t_k) = Σ_i ξ_i(t_k)`.
    pub mean_x: Vec<Vec<T>>,
    pub mean_x_ci: Vec<Vec<T>>,
    /// Trapezoid integral of `ξ̂` over the grid, per path then averaged.
    pub integral: Vec<T>,
    pub integral_ci: Vec<T>,
    pub paths: usize,
}

/// Sums and sums of squares for one chunk of paths.
#[derive(Clone)]
struct Acc<T> {
    sum: Vec<T>,
    sq: Vec<T>,
}

impl<T: Real> Acc<T> {
    fn zeros(len: usize) -> Self {
        Acc { sum: vec![T::zero(); len], sq: vec![T::zero(); len] }
    }

    fn add_sample(&mut self, v: &[T]) {
        for ((s, q), &x) in self.sum.iter_mut().zip(self.sq.iter_mut()).zip(v) {
            *s += x;
            *q += x * x;
        }
    }

    fn merge(mut self, other: &Acc<T>) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += *b;
        }
        for (a, b) in self.sq.iter_mut().zip(&other.sq) {
            *a += *b;
        }
        self
    }
}

/// Pairwise tree reduction in index order.
fn tree_reduce<T: Real>(mut items: Vec<Acc<T>>) -> Acc<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        items = next;
    }
    items.pop().expect("at least one chunk")
}

/// Per-path sample vector: `δ(t_k) ⊗ x(t_k)` for every grid time, then
/// `x(t_k)`, then the trapezoid integral of `δ ⊗ x`.
fn path_sample<T: Real>(
    model: &SwitchedSisModel<T>,
    spec: &MarkovSpec<T>,
    x0: &[T],
    sigma0: usize,
    grid: &[T],
    cfg: &IntegratorConfig<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<T>> {
    let (m, n, g) = (model.modes(), model.dim(), grid.len());
    let mn = m * n;
    let horizon = grid[g - 1];
    let path = sample_path(spec, sigma0, horizon, rng);
    let mut out = vec![T::zero(); g * mn + g * n + mn];
    let mut x = x0.to_vec();
    let mut t = T::zero();
    let mut prev: Option<(T, Vec<T>)> = None;
    for (k, &tk) in grid.iter().enumerate() {
        advance_pieces(model, &path.pieces_between(t, tk), &mut x, cfg)?;
        t = tk;
        let s = path.state_at(tk);
        let mut xi = vec![T::zero(); mn];
        xi[s * n..(s + 1) * n].copy_from_slice(&x);
        out[k * mn..(k + 1) * mn].copy_from_slice(&xi);
        out[g * mn + k * n..g * mn + (k + 1) * n].copy_from_slice(&x);
        if let Some((tp, xp)) = &prev {
            let half = (tk - *tp) / T::c(2.0);
            for (i, slot) in out[g * mn + g * n..].iter_mut().enumerate() {
                *slot += half * (xp[i] + xi[i]);
            }
        }
        prev = Some((tk, xi));
    }
    Ok(out)
}

/// Monte Carlo estimates of the indicator moments `ξ_i(t) = E(δ_i(t) x(t))`.
/// Path `p` uses the ChaCha8 stream `p` of `seed`, and chunk sums are combined
/// by a fixed pairwise tree, so results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_moments<T: Real>(
    model: &SwitchedSisModel<T>,
    spec: &MarkovSpec<T>,
    x0: &[T],
    sigma0: usize,
    grid: &[T],
    paths: usize,
    seed: u64,
    cfg: &IntegratorConfig<T>,
) -> Result<MomentEstimates<T>> {
    check_grid(grid)?;
    if paths < MIN_PATHS {
        return Err(Error::InvalidInput(format!("at least {MIN_PATHS} paths are required, got {paths}")));
    }
    if spec.states() != model.modes() {
        return Err(Error::DimensionMismatch { expected: model.modes(), found: spec.states() });
    }
    if sigma0 >= spec.states() {
        return Err(Error::InvalidInput(format!("initial state {sigma0} out of range")));
    }
    model.check_state(x0)?;
    let (m, n, g) = (model.modes(), model.dim(), grid.len());
    let mn = m * n;
    let len = g * mn + g * n + mn;
    let chunks: Vec<(usize, usize)> = (0..paths.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(paths))).collect();
    let accs: Vec<Acc<T>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = Acc::zeros(len);
            for p in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                acc.add_sample(&path_sample(model, spec, x0, sigma0, grid, cfg, &mut rng)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = tree_reduce(accs);
    let nn = T::from_usize_lossy(paths);
    let z = T::c(Z95);
    let stats = |k: usize| -> (T, T) {
        let mean = total.sum[k] / nn;
        let var = ((total.sq[k] - total.sum[k] * mean) / (nn - T::one())).max(T::zero());
        (mean, z * (var / nn).sqrt())
    };
    let split = |offset: usize, count: usize, width: usize| -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        (0..count)
            .map(|k| (0..width).map(|i| stats(offset + k * width + i)).unzip())
            .unzip()
    };
    let (xi_mean, xi_ci) = split(0, g, mn);
    let (mean_x, mean_x_ci) = split(g * mn, g, n);
    let (integral, integral_ci): (Vec<T>, Vec<T>) = (0..mn).map(|i| stats(g * mn + g * n + i)).unzip();
    Ok(MomentEstimates { times: grid.to_vec(), xi_mean, xi_ci, mean_x, mean_x_ci, integral, integral_ci, paths })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict<T> {
    pub a_pi_bar: Mat<T>,
    pub abscissa: T,
    pub hurwitz: bool,
    /// Cross-check: `𝒜_Π̄⁻¹ <= 0` entrywise.
    pub inverse_nonpositive: bool,
    /// `−𝒜_Π̄⁻¹ ξ(0)`, which bounds `∫_0^∞ ξ(s) ds`, when Hurwitz.
    pub l1_bound: Option<Vec<T>>,
    /// L1 stability implies mean-square stability; reported, not tested separately.
    pub mean_square_stable: bool,
}

/// The moment matrix built from `Π̄` is Hurwitz iff the switched system is
/// L1-stable for every admissible `Π(t) <= Π̄`.
pub fn l1_stability_test<T: Real>(model: &SwitchedSisModel<T>, spec: &MarkovSpec<T>, xi0: &[T]) -> Result<StabilityVerdict<T>> {
    let a = build_moment_matrix(model, &spec.pi_bar)?;
    if xi0.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: xi0.len() });
    }
    if xi0.iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidInput("xi0 must be nonnegative".into()));
    }
    let abscissa = spectral_abscissa(&a)?;
    let hurwitz = abscissa < T::zero();
    let inverse_nonpositive = neg_inverse_nonpositive(&MetzlerMatrix::new(a.clone())?).nonpositive;
    let l1_bound = if hurwitz {
        let y = solve(&a, xi0)?;
        Some(y.into_iter().map(|v| -v).collect())
    } else {
        None
    };
    Ok(StabilityVerdict { a_pi_bar: a, abscissa, hurwitz, inverse_nonpositive, l1_bound, mean_square_stable: hurwitz })
}
