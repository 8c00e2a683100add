use num_complex::Complex64;
use yamada::floquet::*;
use yamada::integrator::{integrate, HistorySpec};
use yamada::pulses::*;
use yamada::stability::omega_grid;
use yamada::ModelParams;

/// Distance constant `C` in `dist(μ, ACS) ≤ C/τ`, fitted once from the runs
/// below at τ = 100 and τ = 200.
const ACS_DISTANCE_C: f64 = 12.0;

fn k_train_orbit(kappa: f64, tau: f64, k: u32) -> (PeriodicOrbit, f64) {
    let p = ModelParams::working_point().with_feedback(kappa, tau);
    let opts = ClassifyOptions::default();
    let train = seed_k_train(&p, k, &opts).unwrap();
    let (s, traj) = run_and_classify(&train.params, &train.history, 30.0 * tau, &opts).unwrap();
    assert_eq!(s.k, Some(k));
    let orbit = PeriodicOrbit::from_trajectory(&traj, s.period.unwrap(), k).unwrap();
    (orbit, s.delta.unwrap())
}

#[test]
fn one_pulse_orbit_is_stable() {
    let (orbit, _) = k_train_orbit(0.1, 100.0, 1);
    assert!(orbit.residual() < PERIODICITY_TOL);
    let set = monodromy_multipliers(&orbit, None, None).unwrap();
    assert!(set.warnings.is_empty());
    assert!((set.trivial - 1.0).norm() < 5e-2);
    assert!(set.max_nontrivial_modulus() < 1.0);
    assert!(set.is_conjugate_closed(1e-8));
    assert_eq!(set.multipliers.len(), DEFAULT_LEADING);
    assert!(set.multipliers.windows(2).all(|w| w[0].norm() >= w[1].norm()));
}

#[test]
fn trivial_multiplier_improves_with_resolution() {
    let (orbit, _) = k_train_orbit(0.1, 100.0, 1);
    let n = default_nodes(100.0) / 2;
    let coarse = monodromy_multipliers(&orbit, Some(n), Some(5)).unwrap();
    let fine = monodromy_multipliers(&orbit, Some(2 * n), Some(5)).unwrap();
    assert!((fine.trivial - 1.0).norm() < (coarse.trivial - 1.0).norm());
}

#[test]
fn multipliers_follow_the_continuous_spectrum() {
    let omegas = omega_grid(-4.0, 4.0, 8001);
    for (k, tau) in [(1, 100.0), (1, 200.0), (2, 200.0)] {
        let (orbit, delta) = k_train_orbit(0.1, tau, k);
        let set = monodromy_multipliers(&orbit, None, None).unwrap();
        let p = *orbit.params();
        let curve = acs(&p, delta, k, &omegas).unwrap();
        let pc = set.pseudo_continuous(k, 0.05);
        assert!(pc.len() > 10);
        let worst = pc.iter().map(|m| curve.distance(*m)).fold(0.0, f64::max);
        assert!(worst <= ACS_DISTANCE_C / tau, "k={k} τ={tau}: distance {worst}");
        let bound = acs_max_modulus(&p, k).unwrap();
        assert!(pc.iter().all(|m| m.norm() < bound + ACS_DISTANCE_C / tau));
    }
}

#[test]
fn two_pulse_orbit_has_two_weak_directions() {
    let (orbit, _) = k_train_orbit(0.1, 200.0, 2);
    let set = monodromy_multipliers(&orbit, None, Some(50)).unwrap();
    assert!(set.count_near_unit_circle(0.1) >= 2);
    let weak = set.weak_multipliers(2);
    assert!((weak[0] - 1.0).norm() < 5e-2);
    assert!((weak[1] + 1.0).norm() < 0.1);
    assert!(set.nontrivial().iter().all(|m| m.norm() < 1.0));
}

#[test]
fn transient_runs_are_rejected() {
    let p = ModelParams::working_point().with_feedback(0.1, 100.0);
    let h = pulse_seeded_history(&p, DEFAULT_SEED_KICK).unwrap();
    let traj = integrate(&p, &h, 450.0, &Default::default()).unwrap();
    let r = PeriodicOrbit::from_trajectory(&traj, 103.0, 1);
    assert!(matches!(r, Err(yamada::Error::InvalidArgument(_))));
    let off = integrate(&p, &HistorySpec::Constant(p.off_state()), 50.0, &Default::default()).unwrap();
    assert!(PeriodicOrbit::from_trajectory(&off, 30.0, 1).is_err());
}

#[test]
fn acs_branches_are_rotations() {
    let p = ModelParams::working_point().with_feedback(0.1, 100.0);
    let curve = acs(&p, 3.0, 3, &[0.7]).unwrap();
    let v = &curve.values[0];
    let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    assert!((v[0] * rot - v[1]).norm() < 1e-14);
    assert!((v[1] * rot - v[2]).norm() < 1e-14);
    let m = |w: f64| acs(&p, 3.0, 1, &[w]).unwrap().values[0][0].norm();
    assert!((m(0.4) - m(-0.4)).abs() < 1e-15);
    assert!(m(0.1) > m(0.2) && m(0.2) > m(0.4));
}
