mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use common::{periodic_signal, stable_family};
use episwitch_core::jle::{build_extremal_norm, AbsoluteNorm, ExtremalNormApprox};
use episwitch_core::jle::{estimate_jle, jle_upper_bound, JleConfig};
use episwitch_core::signals::{evolution, SwitchedSisModel};
use episwitch_core::SwitchingSignal;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Setup = (SwitchedSisModel<f64>, ExtremalNormApprox<f64>, Vec<Vec<f64>>);

/// A stable family, its extremal norm at the envelope bound, and sample vectors.
fn setup() -> impl Strategy<Value = Setup> {
    (stable_family(2..=4, 1..=3, -1.5, -0.2), any::<u64>()).prop_flat_map(|(model, seed)| {
        let n = model.dim();
        let shift = jle_upper_bound(&model, 4.0, 5).unwrap().value;
        let norm = build_extremal_norm(&model, shift, 64, seed).unwrap();
        (Just(model), Just(norm), vec(vec(-1.0..1.0f64, n), 6))
    })
}

fn signal_for(model: &SwitchedSisModel<f64>) -> impl Strategy<Value = (SwitchingSignal<f64>, f64)> {
    (periodic_signal(model.modes(), 1.5), 0.0..5.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_absolute_and_monotone((_, v, xs) in setup()) {
        for x in &xs {
            let abs: Vec<f64> = x.iter().map(|c| c.abs()).collect();
            prop_assert_eq!(v.norm(x), v.norm(&abs));
            let bigger: Vec<f64> = abs.iter().enumerate().map(|(i, c)| c + 0.1 * i as f64).collect();
            prop_assert!(v.norm(&abs) <= v.norm(&bigger));
        }
    }

    #[test]
    fn norm_axioms((_, v, xs) in setup(), c in -5.0..5.0f64, k in -8i32..8) {
        for pair in xs.windows(2) {
            let (x, z) = (&pair[0], &pair[1]);
            let p = 2f64.powi(k);
            let px: Vec<f64> = x.iter().map(|e| p * e).collect();
            prop_assert_eq!(v.norm(&px), p * v.norm(x));
            let cx: Vec<f64> = x.iter().map(|e| c * e).collect();
            prop_assert!((v.norm(&cx) - c.abs() * v.norm(x)).abs() <= 1e-12 * v.norm(x).max(1.0));
            let sum: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            prop_assert!(v.norm(&sum) <= v.norm(x) + v.norm(z) + 1e-12);
        }
    }

    #[test]
    fn dual_vectors_pair_correctly((_, v, xs) in setup()) {
        for x in xs.iter().filter(|x| x.iter().any(|&c| c != 0.0)) {
            let pair = v.dual_vector(x).unwrap();
            prop_assert!(pair.pairing_defect().abs() <= 1e-9 * pair.value.max(1.0));
            // ‖y‖* <= 1: no sample pairs above its norm.
            for z in &xs {
                prop_assert!(dot(z, &pair.y) <= v.norm(z) * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn extremal_inequality_along_trajectories(
        ((model, v, xs), sigs) in setup().prop_flat_map(|s| {
            let sigs = vec(signal_for(&s.0), 4);
            (Just(s), sigs)
        })
    ) {
        for ((sig, t), x) in sigs.iter().zip(&xs) {
            let x: Vec<f64> = x.iter().map(|c| c.abs()).collect();
            let phi = evolution(&model, sig, *t).unwrap().matrix;
            let lhs = v.norm(&phi.mul_vec(&x));
            let rhs = (v.shift * t).exp() * v.norm(&x);
            prop_assert!(lhs <= rhs * (1.0 + 1e-6) + 1e-300, "lhs {lhs}, rhs {rhs}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn singleton_bounds_meet_at_abscissa(model in stable_family(2..=4, 1..=1, -2.0, 1.0), seed in any::<u64>()) {
        let est = estimate_jle(&model, &JleConfig { seed, budget: 16, ..JleConfig::default() }).unwrap();
        let mu = episwitch_core::posmat::spectral_abscissa(&model.system_matrices()[0]).unwrap();
        prop_assert!(est.lower <= est.upper + 1e-9);
        prop_assert!((est.upper - mu).abs() <= 1e-6 * mu.abs().max(1.0), "upper {} vs μ {}", est.upper, mu);
        prop_assert!((est.lower - mu).abs() <= 1e-6 * mu.abs().max(1.0), "lower {} vs μ {}", est.lower, mu);
    }
}
