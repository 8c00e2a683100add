use num_complex::Complex64;
use proptest::prelude::*;

use yamada::floquet::{acs, acs_max_modulus, min_stable_delay};
use yamada::integrator::{integrate, HistorySpec, IntegratorOptions};
use yamada::model::{discriminant, equilibrium_residual, jacobians, kappa_fold, rhs, steady_states, State};
use yamada::stability::{roots_off, Window};
use yamada::ModelParams;

fn params() -> impl Strategy<Value = ModelParams> {
    (
        1.0..10.0f64,
        1.0..10.0f64,
        1.0..3.0f64,
        0.01..0.2f64,
        0.01..0.2f64,
        0.0..0.99f64,
        0.5..40.0f64,
    )
        .prop_map(|(pump, absorber, saturation, gamma_g, gamma_q, kappa, tau)| ModelParams {
            pump,
            absorber,
            saturation,
            gamma_g,
            gamma_q,
            kappa,
            tau,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn trajectories_stay_nonnegative_and_bounded(p in params(), amp in 0.0..2.0f64, width in 0.1..1.0f64) {
        let h = HistorySpec::Perturbed { amplitude: amp, width: width * p.tau };
        let traj = integrate(&p, &h, 150.0, &IntegratorOptions::default()).unwrap();
        for (_, s) in traj.nodes() {
            prop_assert!(s.g > 0.0 && s.q > 0.0 && s.i > -1e-8);
            prop_assert!(s.g <= p.pump * (1.0 + 1e-6) && s.q <= p.absorber * (1.0 + 1e-6));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(p in params(), g in 0.0..10.0f64, q in 0.0..10.0f64, i in 0.0..5.0f64) {
        let x = State::new(g, q, i);
        let (m1, m2) = jacobians(x, &p);
        let scale = m1.abs().max().max(m2.abs().max());
        let eps = 1e-6;
        for col in 0..3 {
            let mut a = x.to_array();
            let mut b = x.to_array();
            a[col] += eps;
            b[col] -= eps;
            let fa = rhs(State::from_array(a), i, &p).unwrap().to_array();
            let fb = rhs(State::from_array(b), i, &p).unwrap().to_array();
            for row in 0..3 {
                let fd = (fa[row] - fb[row]) / (2.0 * eps);
                prop_assert!((fd - m1[(row, col)]).abs() <= 1e-6 * scale);
            }
        }
        let fa = rhs(x, i + eps, &p).unwrap().to_array();
        let fb = rhs(x, i - eps, &p).unwrap().to_array();
        prop_assert!(((fa[2] - fb[2]) / (2.0 * eps) - m2[(2, 2)]).abs() <= 1e-6 * scale);
    }

    #[test]
    fn steady_states_solve_the_equations(p in params()) {
        let set = steady_states(&p).unwrap();
        prop_assert!(set.off.state == p.off_state());
        for s in set.iter() {
            prop_assert!(equilibrium_residual(s.state, &p) < 1e-10);
            prop_assert!(s.state.i >= 0.0 || !s.physical);
        }
    }

    #[test]
    fn discriminant_vanishes_on_fold(pump in 2.0..10.0f64, absorber in 1.0..8.0f64, saturation in 1.1..3.0f64) {
        let kf = kappa_fold(pump, absorber, saturation).unwrap();
        let p = ModelParams { pump, absorber, saturation, kappa: kf, ..ModelParams::working_point() };
        let scale = (saturation * pump).powi(2).max(1.0);
        prop_assert!(discriminant(&p).abs() < 1e-9 * scale);
    }

    #[test]
    fn off_spectra_are_conjugate_closed(p in params()) {
        let set = roots_off(&p, Window::symmetric(-0.3, 1.0, 2.0)).unwrap();
        prop_assert!(set.is_conjugate_closed(1e-8));
        for z in &set.roots {
            prop_assert!(set.contains_near(z.conj(), 1e-8) || !set.window.contains(z.conj()));
        }
    }

    #[test]
    fn acs_modulus_is_even_and_decreasing(p in params(), delta0 in 0.0..50.0f64, k in 1u32..5, w in 0.01..5.0f64) {
        prop_assume!(p.net_gain().abs() > 1e-3);
        let m = |x: f64| acs(&p, delta0, k, &[x]).unwrap().values[0][0].norm();
        prop_assert!((m(w) - m(-w)).abs() <= 1e-15 * m(w).max(1.0));
        prop_assert!(m(w) < m(0.5 * w));
        prop_assert!((m(0.0) - acs_max_modulus(&p, k).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn stability_bounds_grow_with_pulse_count(p in params(), k in 1u32..8) {
        prop_assume!(p.net_gain().abs() > 1e-3 && p.kappa < p.net_gain().abs() && p.kappa > 0.0);
        prop_assert!(acs_max_modulus(&p, k + 1).unwrap() >= acs_max_modulus(&p, k).unwrap());
        prop_assert!(min_stable_delay(&p, k + 1).unwrap() >= min_stable_delay(&p, k).unwrap());
    }
}

#[test]
fn acs_residual_vanishes_on_random_samples() {
    use yamada::floquet::acs_residual;
    let p = ModelParams::working_point().with_feedback(0.07, 100.0);
    for k in 1..4 {
        let curve = acs(&p, 12.5, k, &[-2.0, -0.3, 0.0, 0.9, 3.0]).unwrap();
        for (w, vals) in curve.omega.iter().zip(&curve.values) {
            for mu in vals {
                assert!(acs_residual(&p, 12.5, k, *w, *mu) < 1e-10);
                assert!(acs_residual(&p, 12.5, k, *w, *mu * Complex64::new(1.1, 0.0)) > 1e-6);
            }
        }
    }
}
