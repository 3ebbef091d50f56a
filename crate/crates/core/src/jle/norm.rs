use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::envelope_bound;
use crate::error::{Error, Result};
use crate::posmat::{dot, expm, Mat};
use crate::scalar::Real;
use crate::signals::SwitchedSisModel;

/// Sampled products whose norm exceeds this signal an unbounded semigroup.
pub const GROWTH_LIMIT: f64 = 1e6;

const TAU_GRID: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];
const MAX_WALK: usize = 20;
const MAX_GENERATORS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormId {
    Sup,
    WeightedSup,
    Extremal,
}

/// `(x, y)` with `⟨x, y⟩ = ‖x‖` and `‖y‖* = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPair<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub norm_id: NormId,
    /// `‖x‖`, equal to `⟨x, y⟩`.
    pub value: T,
}

/// A norm with `‖x‖ = ‖|x|‖` and a computable dual vector.
pub trait AbsoluteNorm<T: Real> {
    fn dim(&self) -> usize;
    fn norm(&self, x: &[T]) -> T;
    fn dual_vector(&self, x: &[T]) -> Result<DualPair<T>>;
}

/// Weighted sup-norm `max_i |x_i| / w_i`; unit weights give `‖·‖∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupNorm<T> {
    weights: Vec<T>,
}

impl<T: Real> SupNorm<T> {
    pub fn new(n: usize) -> Self {
        SupNorm { weights: vec![T::one(); n] }
    }

    pub fn weighted(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput("sup-norm weights must be positive".into()));
        }
        Ok(SupNorm { weights })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn is_unit(&self) -> bool {
        self.weights.iter().all(|&w| w == T::one())
    }

    /// Dual norm `Σ |y_i| w_i`.
    pub fn dual_norm(&self, y: &[T]) -> T {
        y.iter().zip(&self.weights).map(|(&v, &w)| v.abs() * w).sum()
    }

    /// Induced norm of a nonnegative matrix: `max_i (S w)_i / w_i`.
    pub fn operator_norm(&self, s: &Mat<T>) -> T {
        s.mul_vec(&self.weights)
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc.max(v.abs() / w))
    }

    /// Value and the lowest achieving coordinate.
    fn argmax(&self, x: &[T]) -> (T, usize) {
        let mut best = (T::zero(), 0);
        for (i, (&v, &w)) in x.iter().zip(&self.weights).enumerate() {
            let r = v.abs() / w;
            if r > best.0 {
                best = (r, i);
            }
        }
        best
    }
}

fn check_nonzero<T: Real>(x: &[T], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    if x.iter().all(|&v| v == T::zero()) {
        return Err(Error::InvalidInput("dual vector of the zero vector is undefined".into()));
    }
    Ok(())
}

fn signum<T: Real>(v: T) -> T {
    if v < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

impl<T: Real> AbsoluteNorm<T> for SupNorm<T> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn norm(&self, x: &[T]) -> T {
        self.argmax(x).0
    }

    fn dual_vector(&self, x: &[T]) -> Result<DualPair<T>> {
        check_nonzero(x, self.dim())?;
        let (value, i) = self.argmax(x);
        let mut y = vec![T::zero(); x.len()];
        y[i] = signum(x[i]) / self.weights[i];
        let norm_id = if self.is_unit() { NormId::Sup } else { NormId::WeightedSup };
        Ok(DualPair { x: x.to_vec(), y, norm_id, value })
    }
}

/// `v(x) = max_{S ∈ H} ‖S|x|‖_w` over a finite sample `H` of the shifted
/// semigroup `{e^{(A_{j_k} − shift)τ_k} ⋯ e^{(A_{j_1} − shift)τ_1}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalNormApprox<T> {
    /// Nonnegative matrices; the identity comes first.
    pub generators: Vec<Mat<T>>,
    pub base_norm: SupNorm<T>,
    pub shift: T,
}

impl<T: Real> ExtremalNormApprox<T> {
    /// The norm with `H = {I}`, i.e. the base norm itself.
    pub fn identity(base_norm: SupNorm<T>, shift: T) -> Self {
        let n = base_norm.dim();
        ExtremalNormApprox { generators: vec![Mat::identity(n)], base_norm, shift }
    }

    pub fn from_generators(mut generators: Vec<Mat<T>>, base_norm: SupNorm<T>, shift: T) -> Result<Self> {
        let n = base_norm.dim();
        if let Some(g) = generators.iter().find(|g| g.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: g.dim() });
        }
        if generators.iter().any(|g| g.min_entry() < T::zero()) {
            return Err(Error::InvalidInput("generators must be entrywise nonnegative".into()));
        }
        let id = Mat::identity(n);
        generators.retain(|g| *g != id);
        generators.insert(0, id);
        Ok(ExtremalNormApprox { generators, base_norm, shift })
    }

    /// Value, achieving generator and achieving coordinate; ties go to the
    /// earliest generator and the lowest coordinate.
    fn argmax(&self, x: &[T]) -> (T, usize, usize) {
        let ax: Vec<T> = x.iter().map(|v| v.abs()).collect();
        let mut best = (T::neg_infinity(), 0, 0);
        for (k, s) in self.generators.iter().enumerate() {
            let (v, i) = self.base_norm.argmax(&s.mul_vec(&ax));
            if v > best.0 {
                best = (v, k, i);
            }
        }
        best
    }
}

impl<T: Real> AbsoluteNorm<T> for ExtremalNormApprox<T> {
    fn dim(&self) -> usize {
        self.base_norm.dim()
    }

    fn norm(&self, x: &[T]) -> T {
        self.argmax(x).0
    }

    /// `y = sign(x) ∘ (Sᵀ e_i) / w_i` for an achieving `(S, i)`. Then
    /// `⟨x, y⟩ = (S|x|)_i / w_i = v(x)` and `⟨z, y⟩ <= v(z)` for all `z`.
    fn dual_vector(&self, x: &[T]) -> Result<DualPair<T>> {
        check_nonzero(x, self.dim())?;
        let (value, k, i) = self.argmax(x);
        let s = &self.generators[k];
        let wi = self.base_norm.weights[i];
        let y = x.iter().enumerate().map(|(c, &xc)| signum(xc) * s[(i, c)] / wi).collect();
        Ok(DualPair { x: x.to_vec(), y, norm_id: NormId::Extremal, value })
    }
}

impl<T: Real> DualPair<T> {
    /// `⟨x, y⟩ − value`.
    pub fn pairing_defect(&self) -> T {
        dot(&self.x, &self.y) - self.value
    }
}

/// Samples the shifted semigroup by random walks of up to 20 factors
/// `e^{(A_j − shift)τ}`, `τ ∈ {0.1, 0.25, 0.5, 1, 2}`, and keeps the products
/// that are not entrywise dominated. The base weights are all ones when every
/// shifted mode has nonpositive row sums, otherwise the envelope weights.
pub fn build_extremal_norm<T: Real>(
    model: &SwitchedSisModel<T>,
    shift: T,
    sample_budget: usize,
    seed: u64,
) -> Result<ExtremalNormApprox<T>> {
    if !shift.is_finite() {
        return Err(Error::InvalidInput("shift must be finite".into()));
    }
    let n = model.dim();
    let shifted: Vec<Mat<T>> = model.system_matrices().iter().map(|a| a.shift_diag(-shift)).collect();
    let slack = T::c(1e-12);
    let rows_ok = shifted.iter().all(|a| (0..n).all(|i| a.row(i).iter().copied().sum::<T>() <= slack));
    let base_norm = if rows_ok { SupNorm::new(n) } else { SupNorm::weighted(envelope_bound(model)?.1)? };

    let mut factors = Vec::with_capacity(shifted.len() * TAU_GRID.len());
    for a in &shifted {
        for &tau in &TAU_GRID {
            factors.push(expm(a, T::c(tau))?);
        }
    }
    let mut kept = vec![Mat::identity(n)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = T::one() + slack;
    for _ in 0..sample_budget {
        let len = rng.gen_range(1..=MAX_WALK);
        let mut s = Mat::identity(n);
        for _ in 0..len {
            s = factors[rng.gen_range(0..factors.len())].matmul(&s);
            let g = base_norm.operator_norm(&s);
            if g > T::c(GROWTH_LIMIT) || !g.is_finite() {
                return Err(Error::ShiftBelowJle { growth: g.to_f64_lossy() });
            }
            if g > one && kept.len() < MAX_GENERATORS && !kept.iter().any(|k| s.le_entrywise(k)) {
                let mut idx = 1;
                while idx < kept.len() {
                    if kept[idx].le_entrywise(&s) {
                        kept.remove(idx);
                    } else {
                        idx += 1;
                    }
                }
                kept.push(s.clone());
            }
        }
    }
    Ok(ExtremalNormApprox { generators: kept, base_norm, shift })
}
