mod common;

use proptest::prelude::*;

use common::{family_and_signal, signal};
use episwitch_core::signals::evolution;

proptest! {
    #[test]
    fn evolution_is_a_cocycle(
        (model, sig) in family_and_signal(1..=4, 1..=3),
        k in 0usize..12,
        s in 0.0..3.0f64,
    ) {
        // `t` sits on a switching instant so the shifted signal is exact.
        let durations: Vec<f64> = sig.segments.iter().map(|g| g.duration).collect();
        let t: f64 = (0..k).map(|i| durations[i % durations.len()]).sum();
        let full = evolution(&model, &sig, t + s).unwrap().matrix;
        let head = evolution(&model, &sig, t).unwrap().matrix;
        let tail = evolution(&model, &sig.shifted(t).unwrap(), s).unwrap().matrix;
        let composed = tail.matmul(&head);
        let scale = full.max_abs().max(1.0);
        prop_assert!(full.max_abs_diff(&composed) <= 1e-12 * scale, "defect {}", full.max_abs_diff(&composed) / scale);
    }

    #[test]
    fn evolution_is_nonnegative((model, sig) in family_and_signal(1..=4, 1..=3), t in 0.0..6.0f64) {
        let phi = evolution(&model, &sig, t).unwrap().matrix;
        prop_assert!(phi.min_entry() >= 0.0);
    }

    #[test]
    fn evaluation_is_right_continuous(sig in signal(3, 1.5), t_end in 0.5..8.0f64) {
        let t_end = if sig.is_periodic() { t_end } else { t_end.min(sig.length()) };
        let pieces: Vec<_> = sig.pieces(t_end).unwrap().collect();
        for p in &pieces {
            prop_assert_eq!(sig.evaluate(p.t0).unwrap(), p.mode);
            prop_assert_eq!(sig.evaluate(0.5 * (p.t0 + p.t1)).unwrap(), p.mode);
        }
        for tau in sig.switching_times(t_end).unwrap() {
            let p = pieces.iter().find(|p| p.t0 == tau);
            prop_assert!(p.is_some(), "switching time {} is not a piece start", tau);
            prop_assert_eq!(sig.evaluate(tau).unwrap(), p.unwrap().mode);
        }
    }

    #[test]
    fn pieces_tile_the_horizon(sig in signal(3, 1.5), t_end in 0.5..40.0f64) {
        let t_end = if sig.is_periodic() { t_end } else { t_end.min(sig.length()) };
        let pieces: Vec<_> = sig.pieces(t_end).unwrap().collect();
        prop_assert_eq!(pieces[0].t0, 0.0);
        prop_assert_eq!(pieces.last().unwrap().t1, t_end);
        for w in pieces.windows(2) {
            prop_assert_eq!(w[0].t1, w[1].t0);
            prop_assert!(w[0].t0 < w[0].t1);
        }
    }
}
