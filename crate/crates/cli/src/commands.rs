//! One function per experiment.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use yamada::floquet::{self, acs_max_modulus, max_pulses, min_stable_delay, monodromy_multipliers, PeriodicOrbit};
use yamada::integrator::{integrate, HistorySpec};
use yamada::model::steady_states;
use yamada::pulses::{
    fold_estimate, pulse_seeded_history, run_and_classify, scan_kappa_min, seed_k_train, sweep_tau, ClassifyOptions,
    DEFAULT_SEED_KICK,
};
use yamada::stability::{bt_point, classify_off, hopf_curve_off, omega_grid, roots_generic, roots_off, Window};
use yamada::{Error, ModelParams};

use crate::output::{complex, complexes, finite, Report};
use crate::CliError;

pub struct Context {
    pub params: ModelParams,
    pub opts: ClassifyOptions,
}

type Outcome = Result<Report, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryKind {
    /// Constant off state
    Off,
    /// Off state with a rectangular intensity bump
    Perturbed,
    /// One freshly fired pulse from the solitary laser
    Seeded,
}

fn build_history(
    p: &ModelParams,
    kind: Option<HistoryKind>,
    amplitude: Option<f64>,
    width: Option<f64>,
    kick: Option<f64>,
) -> Result<HistorySpec, CliError> {
    Ok(match kind.unwrap_or(HistoryKind::Seeded) {
        HistoryKind::Off => HistorySpec::Constant(p.off_state()),
        HistoryKind::Perturbed => HistorySpec::Perturbed {
            amplitude: amplitude.unwrap_or(0.1),
            width: width.unwrap_or(1.0),
        },
        HistoryKind::Seeded => pulse_seeded_history(p, kick.unwrap_or(DEFAULT_SEED_KICK))?,
    })
}

fn default_horizon(p: &ModelParams) -> f64 {
    20.0 * p.tau.max(1.0)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub history: Option<HistoryKind>,
    /// Bump height for `perturbed`
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Bump width for `perturbed`
    #[arg(long)]
    pub width: Option<f64>,
    /// Kick height for `seeded`
    #[arg(long)]
    pub kick: Option<f64>,
    /// Final time (default 20·τ)
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Sampling step
    #[arg(long)]
    pub dt: Option<f64>,
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Outcome {
    let p = &ctx.params;
    p.validate_forward()?;
    let h = build_history(p, a.history, a.amplitude, a.width, a.kick)?;
    let traj = integrate(p, &h, a.t_end.unwrap_or(default_horizon(p)), &ctx.opts.integrator)?;
    let rows = traj
        .sample(a.dt.unwrap_or(0.5))?
        .into_iter()
        .map(|(t, s)| vec![json!(t), json!(s.g), json!(s.q), json!(s.i)])
        .collect();
    Ok(Report::Table {
        columns: vec!["t", "g", "q", "i"],
        rows,
        meta: json!({ "params": p }),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExciteArgs {
    #[arg(long, value_enum)]
    pub history: Option<HistoryKind>,
    /// Bump height for `perturbed`
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Bump width for `perturbed`
    #[arg(long)]
    pub width: Option<f64>,
    /// Kick height for `seeded`
    #[arg(long)]
    pub kick: Option<f64>,
    /// Run length (default 20·τ)
    #[arg(long)]
    pub horizon: Option<f64>,
}

pub fn excite(ctx: &Context, a: ExciteArgs) -> Outcome {
    let p = &ctx.params;
    p.validate_forward()?;
    let h = build_history(p, a.history, a.amplitude, a.width, a.kick)?;
    let (stats, _) = run_and_classify(p, &h, a.horizon.unwrap_or(default_horizon(p)), &ctx.opts)?;
    Ok(Report::Doc(json!({ "params": p, "stats": stats })))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub tau_step: Option<f64>,
    /// Run length in delays
    #[arg(long)]
    pub horizon_factor: Option<f64>,
}

pub fn sweep(ctx: &Context, a: SweepArgs) -> Outcome {
    let lo = a.tau_min.unwrap_or(80.0);
    let hi = a.tau_max.unwrap_or(300.0);
    let step = a.tau_step.unwrap_or(10.0);
    if !(lo > 0.0 && hi >= lo && step > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(CliError::validation("need 0 < tau_min <= tau_max and tau_step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let taus: Vec<f64> = (0..=n).map(|j| lo + j as f64 * step).collect();
    let branch = sweep_tau(&ctx.params, &taus, a.horizon_factor.unwrap_or(20.0), &ctx.opts)?;
    let rows = branch
        .points
        .iter()
        .map(|q| vec![json!(q.tau), json!(q.period), json!(q.k), json!(q.delta)])
        .collect();
    let k = branch.points.first().map_or(1, |q| q.k as i64);
    Ok(Report::Table {
        columns: vec!["tau", "period", "k", "delta"],
        rows,
        meta: json!({
            "params": ctx.params,
            "aborted_at": branch.aborted_at,
            "min_period": branch.min_period(),
            "fold_estimate": fold_estimate(&branch, k),
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StateLabel {
    O,
    P,
    Q,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumArgs {
    /// Steady state: off (o) or lasing (p, q)
    #[arg(long, value_enum)]
    pub state: Option<StateLabel>,
    #[arg(long, allow_negative_numbers = true)]
    pub re_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub re_max: Option<f64>,
    /// Half-height of the search window
    #[arg(long)]
    pub im_max: Option<f64>,
}

pub fn spectrum(ctx: &Context, a: SpectrumArgs) -> Outcome {
    let p = &ctx.params;
    p.validate()?;
    let window = Window::symmetric(a.re_min.unwrap_or(-0.5), a.re_max.unwrap_or(1.0), a.im_max.unwrap_or(2.0));
    let label = a.state.unwrap_or(StateLabel::O);
    let (set, class) = match label {
        StateLabel::O => (roots_off(p, window)?, Some(classify_off(p)?)),
        StateLabel::P | StateLabel::Q => {
            let ss = steady_states(p)?;
            let s = if label == StateLabel::P { ss.p } else { ss.q };
            let s = s.ok_or_else(|| Error::InvalidArgument(format!("state {label:?} does not exist here")))?;
            (roots_generic(s.state, p, window)?, None)
        }
    };
    let rows = set
        .roots
        .iter()
        .zip(&set.residuals)
        .zip(&set.multiple)
        .map(|((z, r), m)| vec![json!(z.re), json!(z.im), json!(r), json!(m)])
        .collect();
    Ok(Report::Table {
        columns: vec!["lambda_re", "lambda_im", "residual", "multiple"],
        rows,
        meta: json!({
            "params": p,
            "window": set.window,
            "unstable_count": set.unstable_count(),
            "off_stability": class,
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub omega_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_max: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Branch indices (default -2..2)
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub branch: Option<Vec<i64>>,
}

pub fn hopf(ctx: &Context, a: HopfArgs) -> Outcome {
    let p = &ctx.params;
    let omegas = omega_grid(a.omega_min.unwrap_or(0.0), a.omega_max.unwrap_or(1.0), a.samples.unwrap_or(201));
    let branches = a.branch.unwrap_or_else(|| yamada::stability::DEFAULT_HOPF_BRANCHES.to_vec());
    let mut rows = Vec::new();
    for b in branches {
        for pt in hopf_curve_off(p.pump, p.absorber, &omegas, b) {
            rows.push(vec![json!(pt.branch), json!(pt.omega), json!(pt.kappa), json!(pt.tau)]);
        }
    }
    let bt = bt_point(p.pump, p.absorber).ok();
    Ok(Report::Table {
        columns: vec!["branch", "omega", "kappa", "tau"],
        rows,
        meta: json!({ "pump": p.pump, "absorber": p.absorber, "bt_point": bt }),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetArgs {
    /// Pulses per delay interval
    #[arg(long)]
    pub k: Option<u32>,
    /// History intervals (default from τ)
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Multipliers kept
    #[arg(long)]
    pub leading: Option<usize>,
    /// Run length in delays
    #[arg(long)]
    pub horizon_factor: Option<f64>,
}

pub fn floquet(ctx: &Context, a: FloquetArgs) -> Outcome {
    let p = &ctx.params;
    p.validate_forward()?;
    let k = a.k.unwrap_or(1);
    let train = seed_k_train(p, k, &ctx.opts)?;
    let horizon = a.horizon_factor.unwrap_or(30.0) * train.params.tau;
    let (stats, traj) = run_and_classify(&train.params, &train.history, horizon, &ctx.opts)?;
    let (Some(period), Some(delta)) = (stats.period, stats.delta) else {
        return Err(Error::NoBranch(format!("seeded run ended as {}", stats.classification)).into());
    };
    if stats.k != Some(k) {
        return Err(Error::NoBranch(format!("seeded {k}-pulse train settled with k = {:?}", stats.k)).into());
    }
    let orbit = PeriodicOrbit::from_trajectory(&traj, period, k)?;
    let set = monodromy_multipliers(&orbit, a.nodes, a.leading)?;
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    let rows = set
        .multipliers
        .iter()
        .map(|m| vec![json!(m.re), json!(m.im), json!(m.norm())])
        .collect();
    Ok(Report::Table {
        columns: vec!["mu_re", "mu_im", "modulus"],
        rows,
        meta: json!({
            "params": train.params,
            "k": k,
            "period": period,
            "delta": delta,
            "periodicity_residual": orbit.residual(),
            "nodes": set.nodes,
            "trivial": complex(set.trivial),
            "max_nontrivial_modulus": set.max_nontrivial_modulus(),
            "weak": complexes(&set.weak_multipliers(k)),
            "acs_max_modulus": acs_max_modulus(&train.params, k).ok(),
            "warnings": set.warnings,
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcsArgs {
    /// Limiting drift `kT − τ`
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_max: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn acs(ctx: &Context, a: AcsArgs) -> Outcome {
    let p = &ctx.params;
    let delta0 = a.delta0.ok_or_else(|| CliError::validation("acs needs --delta0"))?;
    let omegas = omega_grid(a.omega_min.unwrap_or(-3.0), a.omega_max.unwrap_or(3.0), a.samples.unwrap_or(601));
    let curve = floquet::acs(p, delta0, a.k.unwrap_or(1), &omegas)?;
    let mut rows = Vec::new();
    for (w, vals) in curve.omega.iter().zip(&curve.values) {
        for (b, mu) in vals.iter().enumerate() {
            rows.push(vec![json!(w), json!(b), json!(mu.re), json!(mu.im)]);
        }
    }
    Ok(Report::Table {
        columns: vec!["omega", "branch", "mu_re", "mu_im"],
        rows,
        meta: json!({ "params": p, "delta0": delta0, "k": curve.k, "skipped": curve.skipped }),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsArgs {
    #[arg(long)]
    pub k: Option<u32>,
}

pub fn bounds(ctx: &Context, a: BoundsArgs) -> Outcome {
    let p = &ctx.params;
    p.validate()?;
    let k = a.k.unwrap_or(1);
    let r = acs_max_modulus(p, k)?;
    let tmin = min_stable_delay(p, k)?;
    let kmax = if p.tau > 0.0 { Some(max_pulses(p, p.tau)?) } else { None };
    Ok(Report::Doc(json!({
        "kappa": p.kappa,
        "tau": p.tau,
        "k": k,
        "acs_max_modulus": r,
        "min_stable_delay": finite(tmin),
        "min_stable_delay_unbounded": tmin.is_infinite(),
        "max_pulses": kmax.map(finite),
        "max_pulses_unbounded": kmax.is_some_and(f64::is_infinite),
    })))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanKappaArgs {
    #[arg(long)]
    pub kappa_lo: Option<f64>,
    #[arg(long)]
    pub kappa_hi: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn scan_kappa(ctx: &Context, a: ScanKappaArgs) -> Outcome {
    let p = &ctx.params;
    let bracket = (a.kappa_lo.unwrap_or(0.001), a.kappa_hi.unwrap_or(0.05));
    let tol = a.tol.unwrap_or(5e-4);
    let km = scan_kappa_min(p, p.tau, bracket, tol, &ctx.opts)?;
    Ok(Report::Doc(json!({ "tau": p.tau, "kappa_min": km, "tol": tol })))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetArgs {}

pub fn preset_doc(ctx: &Context, _: PresetArgs) -> Outcome {
    ctx.params.validate()?;
    Ok(Report::Doc(Value::from(serde_json::to_value(ctx.params).map_err(CliError::io)?)))
}
