#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;

use episwitch_core::signals::{Segment, SignalKind};
use episwitch_core::{Mat, SisModel, SwitchedSisModel, SwitchingSignal};

/// Sparse nonnegative `n×n` entries in `[0, hi)`.
pub fn nonneg_entries(n: usize, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    vec((any::<bool>(), 0.0..hi), n * n).prop_map(|v| v.into_iter().map(|(keep, x)| if keep { x } else { 0.0 }).collect())
}

pub fn nonneg(n: std::ops::RangeInclusive<usize>, hi: f64) -> impl Strategy<Value = Mat<f64>> {
    n.prop_flat_map(move |n| nonneg_entries(n, hi).prop_map(move |v| Mat::from_vec(n, v).unwrap()))
}

pub fn metzler(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Mat<f64>> {
    n.prop_flat_map(|n| {
        (nonneg_entries(n, 1.0), vec(-3.0..1.0f64, n)).prop_map(move |(v, diag)| {
            let mut m = Mat::from_vec(n, v).unwrap();
            for (i, d) in diag.into_iter().enumerate() {
                m[(i, i)] = d;
            }
            m
        })
    })
}

/// Adds a cycle `i → i+1` so the matrix is irreducible.
pub fn with_cycle(mut m: Mat<f64>, weight: f64) -> Mat<f64> {
    let n = m.dim();
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            m[(i, j)] = m[(i, j)].max(weight);
        }
    }
    m
}

pub fn sis_model_n(n: usize) -> impl Strategy<Value = SisModel<f64>> {
    (vec(0.2..2.0f64, n), nonneg_entries(n, 1.5)).prop_map(move |(d, b)| SisModel::new(d, Mat::from_vec(n, b).unwrap()).unwrap())
}

pub fn sis_model(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = SisModel<f64>> {
    n.prop_flat_map(sis_model_n)
}

pub fn family(n: std::ops::RangeInclusive<usize>, m: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = SwitchedSisModel<f64>> {
    (n, m).prop_flat_map(|(n, m)| vec(sis_model_n(n), m).prop_map(|ms| SwitchedSisModel::new(ms).unwrap()))
}

pub fn signal(m: usize, max_dwell: f64) -> impl Strategy<Value = SwitchingSignal<f64>> {
    (any::<bool>(), vec((0..m, 0.05..max_dwell), 1..6)).prop_map(|(periodic, segs)| {
        let kind = if periodic { SignalKind::Periodic } else { SignalKind::PiecewiseConstant };
        let segments = segs.into_iter().map(|(mode, duration)| Segment { mode, duration }).collect();
        SwitchingSignal::new(kind, segments).unwrap()
    })
}

/// A periodic signal, so any horizon is admissible.
pub fn periodic_signal(m: usize, max_dwell: f64) -> impl Strategy<Value = SwitchingSignal<f64>> {
    vec((0..m, 0.05..max_dwell), 1..6).prop_map(|segs| {
        let segments = segs.into_iter().map(|(mode, duration)| Segment { mode, duration }).collect();
        SwitchingSignal::new(SignalKind::Periodic, segments).unwrap()
    })
}

pub fn family_and_signal(
    n: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = (SwitchedSisModel<f64>, SwitchingSignal<f64>)> {
    family(n, m).prop_flat_map(|f| {
        let modes = f.modes();
        (Just(f), periodic_signal(modes, 1.5))
    })
}

pub fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.0..=1.0f64, n)
}

/// Stable Metzler family with `μ(A_j)` in `[lo, hi]` for every mode.
pub fn stable_family(
    n: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = SwitchedSisModel<f64>> {
    (n, m).prop_flat_map(move |(n, m)| {
        vec((nonneg_entries(n, 1.0), vec(0.2..1.5f64, n), lo..hi), m).prop_map(move |modes| {
            let models = modes
                .into_iter()
                .enumerate()
                .map(|(j, (b, d0, target))| {
                    let b = Mat::from_vec(n, b).unwrap();
                    let b = if j == 0 { with_cycle(b, 0.2) } else { b };
                    let a = &b - &Mat::from_diag(&d0);
                    let shift = episwitch_core::posmat::spectral_abscissa(&a).unwrap() - target;
                    let d: Vec<f64> = d0.iter().map(|v| v + shift).collect();
                    let lift = d.iter().fold(0.0f64, |acc, &v| acc.max(0.1 - v));
                    let d = d.iter().map(|v| v + lift).collect();
                    SisModel::new(d, b.shift_diag(lift)).unwrap()
                })
                .collect();
            SwitchedSisModel::new(models).unwrap()
        })
    })
}

pub fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
