//! Acceptance checks. Each test prints one `PASS`/`FAIL` line per criterion
//! and then asserts it.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use yamada::floquet::{acs, acs_max_modulus, monodromy_multipliers, FloquetSet, PeriodicOrbit};
use yamada::integrator::{integrate, HistorySpec, IntegratorOptions};
use yamada::model::{discriminant, jacobians, kappa_fold, kappa_transcritical, steady_states, State};
use yamada::pulses::{
    classify_response, profile_mismatch, pulse_seeded_history, reappearance_history, run_and_classify,
    scan_kappa_min, seed_k_train, ClassifyOptions, ResponseClass, DEFAULT_SEED_KICK,
};
use yamada::stability::{
    bt_point, char_off, hopf_curve_off, off_factor, off_factor_derivative, omega_grid, roots_generic, roots_off,
    Window, DEFAULT_HOPF_BRANCHES,
};
use yamada::ModelParams;

fn report(id: &str, what: &str, ok: bool, detail: String) -> bool {
    println!("{id} {} {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn wp() -> ModelParams {
    ModelParams::working_point()
}

#[test]
fn ac1_excitation_response() {
    let start = std::time::Instant::now();
    let run = |kappa: f64| {
        let p = wp().with_feedback(kappa, 100.0);
        let h = pulse_seeded_history(&p, DEFAULT_SEED_KICK).unwrap();
        classify_response(&p, &h, 2000.0).unwrap()
    };
    let weak = run(0.005);
    let strong = run(0.01);
    let elapsed = start.elapsed().as_secs_f64();
    let delta = strong.delta.unwrap_or(f64::NAN);
    let ok = weak.classification == ResponseClass::Decay
        && strong.classification == ResponseClass::SustainedTrain
        && strong.k == Some(1)
        && delta > 0.0
        && delta < 20.0
        && elapsed < 10.0;
    assert!(report(
        "AC1",
        "κ=0.005 decays, κ=0.01 sustains k=1 with 0<δ<20",
        ok,
        format!(
            "{} / {} k={:?} δ={delta:.4} in {elapsed:.2}s",
            weak.classification, strong.classification, strong.k
        ),
    ));
}

#[test]
fn ac2_analytic_curves() {
    let kt = kappa_transcritical(6.5, 5.8);
    let kf = kappa_fold(5.9, 5.8, 1.8).unwrap();
    let p = wp().with_pump(5.9).with_kappa(kf);
    let disc = discriminant(&p);
    // 6.5 − 5.8 − 1 is not exactly representable; exact means to rounding.
    let ok = (kt - 0.3).abs() <= 4.0 * f64::EPSILON && (0.09..=0.10).contains(&kf) && disc.abs() < 1e-9;
    assert!(report(
        "AC2",
        "κ_T = 0.3, κ_F ∈ [0.09, 0.10], Δ(κ_F) = 0",
        ok,
        format!("κ_T={kt:e} κ_F={kf:.6} Δ={disc:e}"),
    ));
}

#[test]
fn ac3_double_zero() {
    let bt = bt_point(6.5, 5.8).unwrap();
    let p = wp().with_feedback(bt.kappa, bt.tau);
    let zero = Complex64::new(0.0, 0.0);
    let f = off_factor(zero, &p).norm();
    let df = off_factor_derivative(zero, &p).norm();
    let ok = f < 1e-12 && df < 1e-12;
    assert!(report(
        "AC3",
        "|f(0)|, |f'(0)| < 1e-12 at the double-zero point",
        ok,
        format!("(τ, κ)=({:.6}, {:.6}) |f|={f:e} |f'|={df:e}", bt.tau, bt.kappa),
    ));
}

#[test]
fn ac4_hopf_residuals() {
    let omegas = omega_grid(0.02, 0.94, 10);
    let mut points = Vec::new();
    for k in DEFAULT_HOPF_BRANCHES {
        points.extend(hopf_curve_off(6.5, 5.8, &omegas, k));
    }
    let worst = points
        .iter()
        .map(|pt| char_off(Complex64::new(0.0, pt.omega), &wp().with_feedback(pt.kappa, pt.tau)).norm())
        .fold(0.0, f64::max);
    let below = points.iter().filter(|pt| pt.kappa <= 0.3).count();
    let ok = points.len() == 50 && worst < 1e-10 && below == 0;
    assert!(report(
        "AC4",
        "50 Hopf points with |char_off(iω)| < 1e-10, none with κ ≤ |A−B−1|",
        ok,
        format!("points={} max residual={worst:e} κ≤0.3: {below}", points.len()),
    ));
}

struct FloquetCase {
    k: u32,
    tau: f64,
    set: FloquetSet,
}

fn floquet_case(k: u32, tau: f64) -> FloquetCase {
    let p = wp().with_feedback(0.1, tau);
    let opts = ClassifyOptions::default();
    let train = seed_k_train(&p, k, &opts).unwrap();
    let (stats, traj) = run_and_classify(&train.params, &train.history, 30.0 * tau, &opts).unwrap();
    assert_eq!(stats.k, Some(k), "seeded train at τ={tau} has k={:?}", stats.k);
    let orbit = PeriodicOrbit::from_trajectory(&traj, stats.period.unwrap(), k).unwrap();
    let set = monodromy_multipliers(&orbit, None, None).unwrap();
    FloquetCase { k, tau, set }
}

fn floquet_cases() -> &'static [FloquetCase] {
    static CASES: OnceLock<Vec<FloquetCase>> = OnceLock::new();
    CASES.get_or_init(|| {
        [(1, 200.0), (1, 400.0), (2, 200.0), (2, 400.0)]
            .into_iter()
            .map(|(k, tau)| floquet_case(k, tau))
            .collect()
    })
}

/// Largest modulus after removing the `k` multipliers tied to the pulse
/// positions (one near each `k`-th root of unity).
fn leading_pseudo_continuous(c: &FloquetCase) -> f64 {
    c.set.pseudo_continuous(c.k, 0.0).iter().map(|m| m.norm()).fold(0.0, f64::max)
}

#[test]
fn ac5_floquet_versus_continuous_spectrum() {
    let cases = floquet_cases();
    let mut all = true;
    for c in cases {
        let target = (1.0f64 / 3.0).powf(1.0 / c.k as f64);
        let dev = (c.set.trivial - 1.0).norm();
        all &= report(
            "AC5",
            &format!("k={} τ={} trivial multiplier within 5e-2 of 1", c.k, c.tau),
            dev < 5e-2,
            format!("|μ−1|={dev:e}"),
        );
        let lead = leading_pseudo_continuous(c);
        all &= report(
            "AC5",
            &format!("k={} τ={} largest nontrivial modulus within 0.1 of (1/3)^(1/k)", c.k, c.tau),
            (lead - target).abs() < 0.1,
            format!("|μ|={lead:.6} target={target:.6}"),
        );
        let outside = c.set.nontrivial().iter().map(|m| m.norm()).fold(0.0, f64::max);
        all &= report(
            "AC5",
            &format!("k={} τ={} nontrivial multipliers inside the unit circle", c.k, c.tau),
            outside < 1.0,
            format!("max |μ|={outside:.8}"),
        );
    }
    for k in [1, 2] {
        let gap = |tau: f64| {
            let c = cases.iter().find(|c| c.k == k && c.tau == tau).unwrap();
            ((1.0f64 / 3.0).powf(1.0 / k as f64) - leading_pseudo_continuous(c)).abs()
        };
        let (g1, g2) = (gap(200.0), gap(400.0));
        let ratio = g2 / g1;
        all &= report(
            "AC5",
            &format!("k={k} gap halves from τ=200 to τ=400 (ratio ≤ 0.6)"),
            ratio <= 0.6,
            format!("gap {g1:.3e} → {g2:.3e}, ratio {ratio:.3}"),
        );
    }
    assert!(all, "AC5 has failing sub-checks");
}

#[test]
fn ac6_reappearance_round_trip() {
    let start = std::time::Instant::now();
    let opts = ClassifyOptions::default();
    let p = wp().with_feedback(0.01, 100.0);
    let h = pulse_seeded_history(&p, DEFAULT_SEED_KICK).unwrap();
    let (s0, traj0) = run_and_classify(&p, &h, 2000.0, &opts).unwrap();
    let t0 = s0.period.unwrap();
    let src = Arc::new(traj0);
    let (p1, h1) = reappearance_history(Arc::clone(&src), t0, 1).unwrap();
    let (s1, traj1) = run_and_classify(&p1, &h1, 20.0 * p1.tau, &opts).unwrap();
    let t1 = s1.period.unwrap_or(f64::NAN);
    let rel = (t1 - t0).abs() / t0;
    let a = s0.pulse_times[s0.pulse_times.len() - 2] - 10.0;
    let b = s1.pulse_times[s1.pulse_times.len() - 2] - 10.0;
    let mismatch = profile_mismatch(&src, a, &traj1, b, t0, 20_000).unwrap();
    let ok = s1.is_sustained() && s1.k == Some(2) && rel < 0.01 && mismatch < 0.01;
    assert!(report(
        "AC6",
        "2-pulse train at τ0+T0 with period and profile within 1%",
        ok,
        format!(
            "τ1={:.4} k={:?} T0={t0:.6} T1={t1:.6} rel={rel:.2e} profile={mismatch:.2e} in {:.2}s",
            p1.tau,
            s1.k,
            start.elapsed().as_secs_f64()
        ),
    ));
}

#[test]
fn ac7_kappa_min_scan() {
    let opts = ClassifyOptions::default();
    let tol = 5e-4;
    let k200 = scan_kappa_min(&wp(), 200.0, (0.001, 0.02), tol, &opts).unwrap();
    let k400 = scan_kappa_min(&wp(), 400.0, (0.001, 0.02), tol, &opts).unwrap();
    let a = report(
        "AC7",
        "onset at τ=200 in [0.004, 0.009]",
        (0.004..=0.009).contains(&k200),
        format!("κ_min={k200:.6}"),
    );
    let b = report(
        "AC7",
        "onset at τ=400 ≤ onset at τ=200 + 5e-4",
        k400 <= k200 + 5e-4,
        format!("κ_min(400)={k400:.6} κ_min(200)={k200:.6}"),
    );
    assert!(a && b);
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams {
        pump: rng.random_range(1.0..10.0),
        absorber: rng.random_range(1.0..10.0),
        saturation: rng.random_range(1.0..3.0),
        gamma_g: rng.random_range(0.01..0.2),
        gamma_q: rng.random_range(0.01..0.2),
        kappa: rng.random_range(0.0..1.0),
        tau: rng.random_range(0.5..50.0),
    }
}

#[test]
fn ac8_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut all = true;

    let mut worst_neg: f64 = 0.0;
    let mut bounded = true;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let h = HistorySpec::Perturbed {
            amplitude: rng.random_range(0.0..2.0),
            width: rng.random_range(0.1..p.tau),
        };
        let traj = integrate(&p, &h, 200.0, &IntegratorOptions::default()).unwrap();
        for (_, s) in traj.nodes() {
            worst_neg = worst_neg.min(s.g).min(s.q).min(s.i);
            bounded &= s.is_finite() && s.g <= p.pump * (1.0 + 1e-6) && s.q <= p.absorber * (1.0 + 1e-6) && s.i < 1e6;
        }
    }
    all &= report(
        "AC8",
        "quasi-positivity and boundedness over 100 draws",
        worst_neg > -1e-8 && bounded,
        format!("most negative component {worst_neg:e}, bounded={bounded}"),
    );

    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let x = State::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..5.0));
        let (m1, m2) = jacobians(x, &p);
        let f = |s: State, d: f64| yamada::model::rhs(s, d, &p).unwrap().to_array();
        let eps = 1e-6;
        let scale = m1.abs().max().max(m2.abs().max()).max(1e-300);
        for col in 0..3 {
            let mut plus = x.to_array();
            let mut minus = x.to_array();
            plus[col] += eps;
            minus[col] -= eps;
            let fp = f(State::from_array(plus), x.i);
            let fm = f(State::from_array(minus), x.i);
            for row in 0..3 {
                let fd = (fp[row] - fm[row]) / (2.0 * eps);
                worst_fd = worst_fd.max((fd - m1[(row, col)]).abs() / scale);
            }
        }
        let fp = f(x, x.i + eps);
        let fm = f(x, x.i - eps);
        for row in 0..3 {
            let fd = (fp[row] - fm[row]) / (2.0 * eps);
            worst_fd = worst_fd.max((fd - m2[(row, 2)]).abs() / scale);
        }
    }
    all &= report(
        "AC8",
        "Jacobians agree with finite differences to 1e-6 relative",
        worst_fd < 1e-6,
        format!("max relative error {worst_fd:e}"),
    );

    let mut worst_res: f64 = 0.0;
    let mut states = 0;
    for _ in 0..100 {
        let mut p = random_params(&mut rng);
        p.kappa = rng.random_range(0.0..0.99);
        let set = steady_states(&p).unwrap();
        for s in set.iter() {
            worst_res = worst_res.max(yamada::model::equilibrium_residual(s.state, &p));
            states += 1;
        }
    }
    all &= report(
        "AC8",
        "steady-state residuals < 1e-10",
        worst_res < 1e-10,
        format!("{states} states, max residual {worst_res:e}"),
    );

    let mut closed = true;
    let mut spectra = 0;
    for _ in 0..20 {
        let mut p = random_params(&mut rng);
        p.kappa = rng.random_range(0.0..0.99);
        let w = Window::symmetric(-0.5, 1.0, 3.0);
        let off = roots_off(&p, w).unwrap();
        closed &= off.is_conjugate_closed(1e-8);
        spectra += 1;
        for s in steady_states(&p).unwrap().iter() {
            if let Ok(set) = roots_generic(s.state, &p, w) {
                closed &= set.is_conjugate_closed(1e-8);
                spectra += 1;
            }
        }
    }
    for c in floquet_cases().iter().take(1) {
        closed &= c.set.is_conjugate_closed(1e-8);
        spectra += 1;
    }
    all &= report(
        "AC8",
        "spectra closed under conjugation",
        closed,
        format!("{spectra} spectra checked"),
    );

    let mut acs_ok = true;
    let mut worst_max: f64 = 0.0;
    for _ in 0..100 {
        let mut p = random_params(&mut rng);
        if p.net_gain().abs() < 1e-3 {
            continue;
        }
        p.kappa = rng.random_range(0.0..p.net_gain().abs().min(1.0));
        let mods: Vec<f64> = (1..=6).map(|k| acs_max_modulus(&p, k).unwrap()).collect();
        acs_ok &= mods.windows(2).all(|w| w[1] >= w[0]);
        for k in [1, 2, 3] {
            let m = |w: f64| acs(&p, 5.0, k, &[w]).unwrap().values[0][0].norm();
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                if m(a) < m(b) {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            let numeric = m(0.5 * (lo + hi));
            worst_max = worst_max.max((numeric - acs_max_modulus(&p, k).unwrap()).abs());
        }
    }
    all &= report(
        "AC8",
        "acs_max_modulus monotone in k and equal to the numerical maximum",
        acs_ok && worst_max < 1e-9,
        format!("monotone={acs_ok} max deviation {worst_max:e}"),
    );
    assert!(all);
}
