mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use common::{diff, family, family_and_signal, state, sup};
use episwitch_core::endemic::{averaged_model, averaging_bound, periodic_orbit, persistence_construction, stabilize};
use episwitch_core::signals::evolution;
use episwitch_core::simulate::{flow, integrate, IntegratorConfig};
use episwitch_core::{Mat, SisModel, SwitchedSisModel, SwitchingSignal};

fn two_group(b: [[f64; 2]; 2]) -> SisModel<f64> {
    SisModel::new(vec![1.0, 1.0], Mat::from_rows(&b).unwrap()).unwrap()
}

/// Two stable modes whose average is unstable.
fn stable_pair() -> impl Strategy<Value = SwitchedSisModel<f64>> {
    (0.05..0.2f64, 2.0..4.0f64).prop_map(|(eps, c)| {
        SwitchedSisModel::new(vec![two_group([[0.0, eps], [c, 0.0]]), two_group([[0.0, c], [eps, 0.0]])]).unwrap()
    })
}

/// Two unstable modes whose average is Hurwitz.
fn unstable_pair() -> impl Strategy<Value = SwitchedSisModel<f64>> {
    (0.2..0.8f64, 0.2..0.8f64, 0.0..0.1f64).prop_map(|(a1, a2, e)| {
        SwitchedSisModel::new(vec![two_group([[1.0 + a1, e], [e, 0.0]]), two_group([[0.0, e], [e, 1.0 + a2]])]).unwrap()
    })
}

proptest! {
    #[test]
    fn averaged_field_is_the_period_mean(
        ((model, sig), x) in family_and_signal(1..=4, 1..=3).prop_flat_map(|(m, s)| {
            let n = m.dim();
            (Just((m, s)), state(n))
        })
    ) {
        let len = sig.length();
        let mut kappa = vec![0.0; model.modes()];
        let mut mean = vec![0.0; model.dim()];
        for p in sig.pieces(len).unwrap() {
            let w = (p.t1 - p.t0) / len;
            kappa[p.mode] += w;
            for (acc, v) in mean.iter_mut().zip(model.model(p.mode).vector_field(&x).unwrap()) {
                *acc += w * v;
            }
        }
        let avg = averaged_model(&model, &kappa).unwrap().vector_field(&x).unwrap();
        prop_assert!(sup(&diff(&avg, &mean)) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn averaging_error_within_bound(
        model in family(1..=3, 2..=2),
        w in vec(0.1..1.0f64, 2),
        period in 0.01..0.1f64,
        x0 in state(3),
    ) {
        let total: f64 = w.iter().sum();
        let kappa: Vec<f64> = w.iter().map(|v| v / total).collect();
        let x0 = &x0[..model.dim()];
        let sig = SwitchingSignal::periodic_from_weights(&kappa, period).unwrap();
        let avg = SwitchedSisModel::single(averaged_model(&model, &kappa).unwrap());
        let bound = averaging_bound(&model, &kappa, period).unwrap().bound_value;
        let cfg = IntegratorConfig::with_step(1e-3);
        for t in [0.25, 0.5, 0.75, 1.0] {
            let x = flow(&model, &sig, x0, t, &cfg).unwrap();
            let y = flow(&avg, &SwitchingSignal::constant(0), x0, t, &cfg).unwrap();
            prop_assert!(sup(&diff(&x, &y)) <= bound, "t = {t}: error {} > {bound}", sup(&diff(&x, &y)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn persistence_floor_holds(model in stable_pair()) {
        let cfg = IntegratorConfig::with_step(1e-3);
        let p = persistence_construction(&model, &[0.5, 0.5], &cfg).unwrap();
        prop_assert!(p.delta > 0.0);
        for start in [p.v.clone(), p.v.iter().map(|v| 0.5 * v).collect::<Vec<_>>()] {
            let traj = integrate(&model, &p.signal, &start, 20.0, &IntegratorConfig::with_step(1e-2)).unwrap();
            let floor = if start == p.v { p.delta } else { p.delta * 0.5 };
            // From 0.5v the floor scales by monotonicity and subhomogeneity.
            prop_assert!(traj.min_component() >= floor - 1e-6, "min {} < {floor}", traj.min_component());
        }
    }

    #[test]
    fn periodic_orbit_closes(model in stable_pair()) {
        let tol = 1e-10;
        let cfg = IntegratorConfig::with_step(1e-3);
        let orbit = periodic_orbit(&model, &[0.5, 0.5], tol, &cfg).unwrap();
        prop_assert!(orbit.residual <= tol);
        prop_assert!(orbit.interior_margin > 0.0);
        let back = flow(&model, &orbit.signal, &orbit.x_star, 1.0, &cfg).unwrap();
        prop_assert!(sup(&diff(&back, &orbit.x_star)) <= 1e-8);
        for j in 0..model.modes() {
            prop_assert!(sup(&model.model(j).vector_field(&orbit.x_star).unwrap()) > 10.0 * tol);
        }
    }

    #[test]
    fn stabilizing_signal_contracts(model in unstable_pair()) {
        let s = stabilize(&model, 20.0, 200, &IntegratorConfig::with_step(1e-3)).unwrap();
        prop_assert!(s.alpha < 1.0);
        prop_assert!(s.iterated_defect <= 1e-9, "defect {}", s.iterated_defect);
        let phi = evolution(&model, &s.signal, s.period).unwrap().matrix;
        let pv = phi.mul_vec(&s.v);
        prop_assert!(pv.iter().zip(&s.v).all(|(a, b)| *a <= s.alpha * b * (1.0 + 1e-12)));
        prop_assert!(s.terminal_norm <= s.envelope_constant * s.alpha.powf((20.0 / s.period).floor()) + 1e-12);
    }
}
