//! Switched SIS families, piecewise-constant switching signals and their
//! evolution operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SisModel;
use crate::posmat::{expm, Mat, MetzlerMatrix};
use crate::scalar::Real;

/// A family of SIS systems sharing the state dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SwitchedSisModel<T: Real> {
    models: Vec<SisModel<T>>,
}

impl<T: Real> SwitchedSisModel<T> {
    pub fn new(models: Vec<SisModel<T>>) -> Result<Self> {
        let first = models.first().ok_or_else(|| Error::InvalidInput("switched model needs at least one mode".into()))?;
        let n = first.dim();
        if let Some(bad) = models.iter().find(|m| m.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.dim() });
        }
        Ok(SwitchedSisModel { models })
    }

    pub fn single(model: SisModel<T>) -> Self {
        SwitchedSisModel { models: vec![model] }
    }

    pub fn models(&self) -> &[SisModel<T>] {
        &self.models
    }

    pub fn model(&self, j: usize) -> &SisModel<T> {
        &self.models[j]
    }

    /// Number of modes `m`.
    pub fn modes(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// The linearisations `A_j = −D_j + B_j`.
    pub fn system_matrices(&self) -> Vec<Mat<T>> {
        self.models.iter().map(SisModel::system_matrix).collect()
    }

    pub fn metzler_family(&self) -> Vec<MetzlerMatrix<T>> {
        self.models.iter().map(SisModel::metzler).collect()
    }

    pub(crate) fn check_state(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("state has non-finite entries".into()));
        }
        Ok(())
    }

    pub(crate) fn check_signal(&self, sig: &SwitchingSignal<T>) -> Result<()> {
        match sig.segments.iter().find(|s| s.mode >= self.modes()) {
            Some(s) => Err(Error::InvalidInput(format!(
                "signal references mode {} but the model has {} modes",
                s.mode,
                self.modes()
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// Finite horizon; the segments cover `[0, horizon)`.
    PiecewiseConstant,
    /// One period of the segment list repeats forever.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    /// 0-based mode index.
    pub mode: usize,
    pub duration: T,
}

/// A right-continuous piecewise-constant signal `σ: [0, ∞) → {0..m-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal<T> {
    pub kind: SignalKind,
    pub segments: Vec<Segment<T>>,
}

/// A maximal interval `[t0, t1)` on which the signal is constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece<T> {
    pub mode: usize,
    pub t0: T,
    pub t1: T,
}

impl<T: Real> SwitchingSignal<T> {
    pub fn new(kind: SignalKind, segments: Vec<Segment<T>>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("signal has no segments".into()));
        }
        if let Some((k, s)) = segments.iter().enumerate().find(|(_, s)| !(s.duration > T::zero()) || !s.duration.is_finite()) {
            return Err(Error::InvalidInput(format!("segment {k} has non-positive duration {}", s.duration)));
        }
        Ok(SwitchingSignal { kind, segments })
    }

    pub fn constant(mode: usize) -> Self {
        SwitchingSignal { kind: SignalKind::Periodic, segments: vec![Segment { mode, duration: T::one() }] }
    }

    /// The κ-periodic signal: mode `j` on `[k T + (κ_0+..+κ_{j-1})T, k T + (κ_0+..+κ_j)T)`.
    pub fn periodic_from_weights(kappa: &[T], period: T) -> Result<Self> {
        validate_weights(kappa)?;
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        let segments = kappa
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > T::zero())
            .map(|(mode, &k)| Segment { mode, duration: k * period })
            .collect();
        Self::new(SignalKind::Periodic, segments)
    }

    /// Period for periodic signals, horizon for finite ones.
    pub fn length(&self) -> T {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == SignalKind::Periodic
    }

    /// Minimum segment duration. Consecutive segments of the same mode are
    /// not merged.
    pub fn dwell_time(&self) -> T {
        self.segments.iter().map(|s| s.duration).fold(T::infinity(), T::min)
    }

    pub fn max_mode(&self) -> usize {
        self.segments.iter().map(|s| s.mode).max().unwrap_or(0)
    }

    fn check_time(&self, t: T) -> Result<()> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
        }
        if !self.is_periodic() && t > self.length() {
            return Err(Error::BeyondHorizon { t: t.to_f64_lossy(), horizon: self.length().to_f64_lossy() });
        }
        Ok(())
    }

    /// `σ(t)`, right-continuous; periodic signals wrap modulo the period. For a
    /// finite signal the value at the horizon is that of the last segment.
    pub fn evaluate(&self, t: T) -> Result<usize> {
        self.check_time(t)?;
        let len = self.length();
        // Same arithmetic as `Pieces`, so switch instants on an integration grid agree.
        let mut index = T::zero();
        if self.is_periodic() {
            index = (t / len).floor();
            if t < index * len {
                index -= T::one();
            } else if t >= (index + T::one()) * len {
                index += T::one();
            }
        }
        let base = index * len;
        let last = self.segments.len() - 1;
        let mut offset = T::zero();
        for (k, s) in self.segments.iter().enumerate() {
            offset += s.duration;
            let end = if k == last { (index + T::one()) * len } else { base + offset };
            if t < end {
                return Ok(s.mode);
            }
        }
        Ok(if self.is_periodic() { self.segments[0].mode } else { self.segments[last].mode })
    }

    /// Constant pieces covering `[0, t_end]`, the last one clipped at `t_end`.
    pub fn pieces(&self, t_end: T) -> Result<Pieces<'_, T>> {
        self.check_time(t_end)?;
        Ok(Pieces { sig: self, t_end, period_index: 0, seg: 0, offset: T::zero(), done: t_end == T::zero() })
    }

    /// Switching instants in `(0, t_end)`.
    pub fn switching_times(&self, t_end: T) -> Result<Vec<T>> {
        let mut out: Vec<T> = Vec::new();
        let mut prev: Option<usize> = None;
        for p in self.pieces(t_end)? {
            if prev.is_some_and(|m| m != p.mode) {
                out.push(p.t0);
            }
            prev = Some(p.mode);
        }
        Ok(out)
    }

    /// The signal `s ↦ σ(s + t)`.
    pub fn shifted(&self, t: T) -> Result<Self> {
        self.check_time(t)?;
        let len = self.length();
        let tau = if self.is_periodic() { t - (t / len).floor() * len } else { t };
        let mut segments = Vec::with_capacity(self.segments.len() + 1);
        let mut tail = Vec::new();
        let mut start = T::zero();
        for s in &self.segments {
            let end = start + s.duration;
            if end <= tau {
                tail.push(*s);
            } else if start < tau {
                segments.push(Segment { mode: s.mode, duration: end - tau });
                tail.push(Segment { mode: s.mode, duration: tau - start });
            } else {
                segments.push(*s);
            }
            start = end;
        }
        if self.is_periodic() {
            segments.extend(tail);
        }
        if segments.is_empty() {
            return Err(Error::BeyondHorizon { t: t.to_f64_lossy(), horizon: len.to_f64_lossy() });
        }
        Self::new(self.kind, segments)
    }
}

/// Iterator over the constant pieces of a signal up to a horizon.
pub struct Pieces<'a, T> {
    sig: &'a SwitchingSignal<T>,
    t_end: T,
    period_index: usize,
    seg: usize,
    offset: T,
    done: bool,
}

impl<T: Real> Iterator for Pieces<'_, T> {
    type Item = Piece<T>;

    fn next(&mut self) -> Option<Piece<T>> {
        if self.done {
            return None;
        }
        let len = self.sig.length();
        let base = T::from_usize_lossy(self.period_index) * len;
        let s = self.sig.segments[self.seg];
        let t0 = base + self.offset;
        self.offset += s.duration;
        let mut t1 = if self.seg + 1 == self.sig.segments.len() {
            T::from_usize_lossy(self.period_index + 1) * len
        } else {
            base + self.offset
        };
        self.seg += 1;
        if self.seg == self.sig.segments.len() {
            if !self.sig.is_periodic() {
                self.done = true;
            }
            self.seg = 0;
            self.offset = T::zero();
            self.period_index += 1;
        }
        if t1 >= self.t_end {
            t1 = self.t_end;
            self.done = true;
        }
        if t1 <= t0 {
            return self.next_or_done();
        }
        Some(Piece { mode: s.mode, t0, t1 })
    }
}

impl<T: Real> Pieces<'_, T> {
    fn next_or_done(&mut self) -> Option<Piece<T>> {
        if self.done {
            None
        } else {
            self.next()
        }
    }
}

pub(crate) fn validate_weights<T: Real>(kappa: &[T]) -> Result<()> {
    if kappa.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if let Some((j, k)) = kappa.iter().enumerate().find(|(_, k)| !(**k >= T::zero()) || !k.is_finite()) {
        return Err(Error::InvalidInput(format!("weight {j} = {k} is negative")));
    }
    let sum: T = kappa.iter().copied().sum();
    let slack = T::c(1e-12).max(T::c(4.0) * T::from_usize_lossy(kappa.len()) * T::epsilon());
    if (sum - T::one()).abs() > slack {
        return Err(Error::InvalidInput(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `Φ_σ(t)` together with its horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOperator<T> {
    pub matrix: Mat<T>,
    pub t: T,
}

/// The evolution operator `Φ_σ(t) = e^{A_{j_k} τ_k} ⋯ e^{A_{j_1} τ_1}` of the
/// linearised switched system. Whole periods of a periodic signal are
/// computed once and raised to a power by repeated squaring.
pub fn evolution<T: Real>(model: &SwitchedSisModel<T>, sig: &SwitchingSignal<T>, t: T) -> Result<EvolutionOperator<T>> {
    model.check_signal(sig)?;
    let a = model.system_matrices();
    let n = model.dim();
    let product = |pieces: &mut dyn Iterator<Item = Piece<T>>| -> Result<Mat<T>> {
        let mut phi = Mat::identity(n);
        for p in pieces {
            phi = expm(&a[p.mode], p.t1 - p.t0)?.matmul(&phi);
        }
        Ok(phi)
    };
    let len = sig.length();
    if !sig.is_periodic() || t <= len {
        let phi = product(&mut sig.pieces(t)?)?;
        return Ok(EvolutionOperator { matrix: phi, t });
    }
    let whole = (t / len).floor();
    let k = whole.to_usize().unwrap_or(usize::MAX);
    let rem = t - whole * len;
    let one_period = product(&mut sig.pieces(len)?)?;
    let mut phi = matrix_power(&one_period, k);
    if rem > T::zero() {
        phi = product(&mut sig.pieces(rem)?)?.matmul(&phi);
    }
    Ok(EvolutionOperator { matrix: phi, t })
}

pub(crate) fn matrix_power<T: Real>(m: &Mat<T>, mut k: usize) -> Mat<T> {
    let mut result = Mat::identity(m.dim());
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = result.matmul(&base);
        }
        k >>= 1;
        if k > 0 {
            base = base.matmul(&base);
        }
    }
    result
}
