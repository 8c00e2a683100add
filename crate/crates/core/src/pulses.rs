//! Pulse-train experiments.
//!
//! A pulse is an upward crossing of the intensity through a threshold. Runs
//! are classified from the pulses that survive the initial transient, and
//! sustained trains are summarised by the spacing `T`, the number `k` of
//! pulses per delay and the drift `δ = kT − τ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{integrate, HistorySpec, IntegratorOptions, Trajectory};
use crate::model::ModelParams;

pub const DEFAULT_REFRACTORY: f64 = 5.0;
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.3;
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.25;
/// Intensity of the rectangular kick that fires the seed pulse.
pub const DEFAULT_SEED_KICK: f64 = 1.0;

const CROSSING_SUBDIVISIONS: usize = 4;
const CROSSING_TOL: f64 = 1e-10;

/// Upward threshold crossings of `I`, merged within the default refractory
/// floor.
pub fn detect_pulses(trajectory: &Trajectory, threshold: f64) -> Result<Vec<f64>> {
    detect_pulses_with(trajectory, threshold, DEFAULT_REFRACTORY)
}

pub fn detect_pulses_with(trajectory: &Trajectory, threshold: f64, refractory: f64) -> Result<Vec<f64>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return invalid("pulse threshold must be positive");
    }
    if !(refractory >= 0.0 && refractory.is_finite()) {
        return invalid("refractory floor must be nonnegative");
    }
    let mut times: Vec<f64> = Vec::new();
    for piece in trajectory.pieces() {
        let h = (piece.t1 - piece.t0) / CROSSING_SUBDIVISIONS as f64;
        for j in 0..CROSSING_SUBDIVISIONS {
            let a = piece.t0 + j as f64 * h;
            let b = if j + 1 == CROSSING_SUBDIVISIONS { piece.t1 } else { a + h };
            let ia = trajectory.intensity_unchecked(a);
            let ib = trajectory.intensity_unchecked(b);
            if ia < threshold && ib >= threshold {
                let t = refine_crossing(trajectory, threshold, a, b);
                if times.last().is_none_or(|&prev| t - prev >= refractory) {
                    times.push(t);
                }
            }
        }
    }
    Ok(times)
}

fn refine_crossing(traj: &Trajectory, threshold: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > CROSSING_TOL * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if traj.intensity_unchecked(mid) < threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Number of entries of `times` in `[from, from + tau)`.
pub fn pulses_in_window(times: &[f64], from: f64, tau: f64) -> usize {
    times.iter().filter(|&&t| t >= from && t < from + tau).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseClass {
    Decay,
    SinglePulse,
    SustainedTrain,
    CwLike,
}

impl ResponseClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseClass::Decay => "decay",
            ResponseClass::SinglePulse => "single-pulse",
            ResponseClass::SustainedTrain => "sustained-train",
            ResponseClass::CwLike => "cw-like",
        }
    }
}

impl std::fmt::Display for ResponseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Threshold as a fraction of the largest intensity reached for `t ≥ 0`.
    pub threshold_fraction: f64,
    pub refractory: f64,
    pub transient_fraction: f64,
    /// Peaks below this absolute intensity do not count as pulses.
    pub min_peak: f64,
    pub max_interval_rel_std: f64,
    pub cw_rel_fluctuation: f64,
    pub integrator: IntegratorOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            threshold_fraction: DEFAULT_THRESHOLD_FRACTION,
            refractory: DEFAULT_REFRACTORY,
            transient_fraction: DEFAULT_TRANSIENT_FRACTION,
            min_peak: 1.0,
            max_interval_rel_std: 0.01,
            cw_rel_fluctuation: 1e-4,
            integrator: IntegratorOptions::default(),
        }
    }
}

/// Summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseTrainStats {
    pub pulse_times: Vec<f64>,
    pub classification: ResponseClass,
    /// Pulses per delay interval, `⌊τ/T⌋ + 1`; sustained trains only.
    pub k: Option<u32>,
    /// Final inter-pulse interval; sustained trains only.
    pub period: Option<f64>,
    /// `kT − τ`; sustained trains only.
    pub delta: Option<f64>,
    pub interval_rel_std: Option<f64>,
    pub threshold: f64,
    pub peak_max: f64,
    /// Mean pulse peak after the transient.
    pub peak_mean: Option<f64>,
    pub horizon: f64,
}

impl PulseTrainStats {
    pub fn is_sustained(&self) -> bool {
        self.classification == ResponseClass::SustainedTrain
    }
}

/// Integrates from `history` up to `horizon` and classifies the response.
pub fn classify_response(params: &ModelParams, history: &HistorySpec, horizon: f64) -> Result<PulseTrainStats> {
    classify_response_with(params, history, horizon, &ClassifyOptions::default())
}

pub fn classify_response_with(
    params: &ModelParams,
    history: &HistorySpec,
    horizon: f64,
    opts: &ClassifyOptions,
) -> Result<PulseTrainStats> {
    Ok(run_and_classify(params, history, horizon, opts)?.0)
}

/// Like [`classify_response_with`] but also returns the trajectory.
pub fn run_and_classify(
    params: &ModelParams,
    history: &HistorySpec,
    horizon: f64,
    opts: &ClassifyOptions,
) -> Result<(PulseTrainStats, Trajectory)> {
    let min_horizon = 20.0 * params.tau.max(1.0);
    if !(horizon >= min_horizon) {
        return invalid(format!("horizon must be at least 20·max(τ, 1) = {min_horizon}"));
    }
    validate_classify_options(opts)?;
    let traj = integrate(params, history, horizon, &opts.integrator)?;
    let stats = classify_trajectory(&traj, opts)?;
    Ok((stats, traj))
}

fn validate_classify_options(o: &ClassifyOptions) -> Result<()> {
    let ok = o.threshold_fraction > 0.0
        && o.threshold_fraction < 1.0
        && o.refractory >= 0.0
        && (0.0..1.0).contains(&o.transient_fraction)
        && o.min_peak > 0.0
        && o.max_interval_rel_std > 0.0
        && o.cw_rel_fluctuation > 0.0;
    if ok {
        Ok(())
    } else {
        invalid("classification options out of range")
    }
}

/// Classifies an already computed run on `[0, t1]`.
pub fn classify_trajectory(traj: &Trajectory, opts: &ClassifyOptions) -> Result<PulseTrainStats> {
    validate_classify_options(opts)?;
    let params = *traj.params();
    let horizon = traj.t1();
    let peak_max = traj.max_intensity();
    let threshold = (opts.threshold_fraction * peak_max).max(f64::MIN_POSITIVE);
    let mut stats = PulseTrainStats {
        pulse_times: Vec::new(),
        classification: ResponseClass::Decay,
        k: None,
        period: None,
        delta: None,
        interval_rel_std: None,
        threshold,
        peak_max,
        peak_mean: None,
        horizon,
    };

    if is_cw_like(traj, opts.cw_rel_fluctuation) {
        stats.classification = ResponseClass::CwLike;
        return Ok(stats);
    }
    if peak_max < opts.min_peak {
        return Ok(stats);
    }
    let times = detect_pulses_with(traj, threshold, opts.refractory)?;
    let late_start = opts.transient_fraction * horizon;
    let late: Vec<f64> = times.iter().copied().filter(|&t| t >= late_start).collect();
    stats.peak_mean = pulse_peaks(traj, &late, opts.refractory);
    stats.pulse_times = times;

    if late.len() >= 3 {
        let intervals: Vec<f64> = late.windows(2).map(|w| w[1] - w[0]).collect();
        let n = intervals.len() as f64;
        let mean = intervals.iter().sum::<f64>() / n;
        let var = intervals.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let rel_std = var.sqrt() / mean;
        stats.interval_rel_std = Some(rel_std);
        let last_interval = intervals[intervals.len() - 1];
        let still_firing = horizon - late[late.len() - 1] < 1.5 * last_interval;
        if rel_std < opts.max_interval_rel_std && still_firing {
            let (k, delta) = pulses_per_delay(params.tau, last_interval);
            stats.classification = ResponseClass::SustainedTrain;
            stats.k = Some(k);
            stats.period = Some(last_interval);
            stats.delta = Some(delta);
            return Ok(stats);
        }
    }
    if !stats.pulse_times.is_empty() {
        stats.classification = ResponseClass::SinglePulse;
    }
    Ok(stats)
}

/// `k = ⌊τ/T⌋ + 1` and `δ = kT − τ ∈ (0, T]`.
pub fn pulses_per_delay(tau: f64, period: f64) -> (u32, f64) {
    let k = (tau / period).floor().max(0.0) as u32 + 1;
    (k, k as f64 * period - tau)
}

fn pulse_peaks(traj: &Trajectory, times: &[f64], width: f64) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let peaks: Vec<f64> = times
        .iter()
        .map(|&t| {
            let hi = (t + width).min(traj.t1());
            let n = 200;
            (0..=n)
                .map(|j| traj.intensity_unchecked(t + (hi - t) * j as f64 / n as f64))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Some(peaks.iter().sum::<f64>() / peaks.len() as f64)
}

fn is_cw_like(traj: &Trajectory, rel_fluctuation: f64) -> bool {
    let tau = traj.params().tau.max(1.0);
    let from = (traj.t1() - 5.0 * tau).max(traj.t0());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, s) in traj.nodes() {
        if t >= from {
            lo = lo.min(s.i);
            hi = hi.max(s.i);
        }
    }
    lo > 1e-6 && (hi - lo) / hi < rel_fluctuation
}

/// History that carries one freshly fired pulse: the tail over `[0, τ]` of the
/// solitary laser (no feedback) kicked by a rectangular bump of height `kick`.
pub fn pulse_seeded_history(params: &ModelParams, kick: f64) -> Result<HistorySpec> {
    if !(params.tau > 0.0 && params.tau.is_finite()) {
        return invalid("a pulse-seeded history needs τ > 0");
    }
    let solitary = params.with_kappa(0.0);
    let seed = HistorySpec::Perturbed {
        amplitude: kick,
        width: 1.0,
    };
    let traj = integrate(&solitary, &seed, params.tau, &IntegratorOptions::default())?;
    Ok(HistorySpec::tail_of(traj))
}

/// `τ0 + k·T0`.
pub fn reappearance_shift(tau0: f64, period0: f64, k: i64) -> f64 {
    tau0 + k as f64 * period0
}

/// A train obtained from a 1-pulse orbit by reappearance.
#[derive(Debug, Clone)]
pub struct ReappearedTrain {
    /// Parameters at the new delay.
    pub params: ModelParams,
    pub history: HistorySpec,
    pub tau0: f64,
    pub period0: f64,
    /// The converged 1-pulse run at `tau0`.
    pub source: Arc<Trajectory>,
}

/// Reuses the tail of a `period`-periodic run at delay `τ0` as history at
/// `τ0 + shift·period`.
pub fn reappearance_history(source: Arc<Trajectory>, period: f64, shift: i64) -> Result<(ModelParams, HistorySpec)> {
    if !(period > 0.0 && period.is_finite()) {
        return invalid("period must be positive");
    }
    let p0 = *source.params();
    let tau1 = reappearance_shift(p0.tau, period, shift);
    if !(tau1 > 0.0) {
        return invalid("reappearance shift gives a nonpositive delay");
    }
    if source.t1() - source.t0() < tau1 {
        return invalid("source run is shorter than the new delay");
    }
    Ok((p0.with_tau(tau1), HistorySpec::tail_of(source)))
}

/// Finds `τ0` with `τ0 + (k − 1)·T(τ0) = params.tau` along the 1-pulse branch
/// and returns the `k`-pulse history this induces at `params.tau`.
pub fn seed_k_train(params: &ModelParams, k: u32, opts: &ClassifyOptions) -> Result<ReappearedTrain> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let target = params.tau;
    let run_one = |tau0: f64| -> Result<(f64, Arc<Trajectory>)> {
        let p0 = params.with_tau(tau0);
        let history = pulse_seeded_history(&p0, DEFAULT_SEED_KICK)?;
        let horizon = (20.0 * tau0.max(1.0)).max(target + 10.0 * tau0);
        let (stats, traj) = run_and_classify(&p0, &history, horizon, opts)?;
        match (stats.classification, stats.k, stats.period) {
            (ResponseClass::SustainedTrain, Some(1), Some(t)) => Ok((t, Arc::new(traj))),
            _ => Err(Error::NoBranch(format!(
                "no sustained 1-pulse train at τ = {tau0} (got {})",
                stats.classification
            ))),
        }
    };

    let km1 = (k - 1) as f64;
    // τ0 + (k−1)(τ0 + δ) = target with δ roughly constant.
    let mut tau0 = target / k as f64;
    let mut last = None;
    for _ in 0..8 {
        let (period, traj) = run_one(tau0)?;
        let delta = period - tau0;
        let residual = tau0 + km1 * period - target;
        last = Some((tau0, period, traj));
        if k == 1 || residual.abs() < 1e-9 * target {
            break;
        }
        tau0 = (target - km1 * delta) / k as f64;
        if !(tau0 > 0.0) {
            return Err(Error::NoBranch(format!("no positive τ0 reaches τ = {target}")));
        }
    }
    let (tau0, period0, source) = last.expect("loop runs at least once");
    // Delay consistent with the measured period; differs from the target by
    // the residual of the last iterate.
    let history = HistorySpec::tail_of(Arc::clone(&source));
    Ok(ReappearedTrain {
        params: *params,
        history,
        tau0,
        period0,
        source,
    })
}

/// Relative L∞ distance between `I` on `[ta, ta + period]` of `a` and on
/// `[tb, tb + period]` of `b`, sampled at `n + 1` points.
pub fn profile_mismatch(a: &Trajectory, ta: f64, b: &Trajectory, tb: f64, period: f64, n: usize) -> Result<f64> {
    if ta < a.t0() || ta + period > a.t1() || tb < b.t0() || tb + period > b.t1() || n == 0 {
        return invalid("profile windows must lie inside both runs");
    }
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..=n {
        let s = period * j as f64 / n as f64;
        let ia = a.intensity_unchecked(ta + s);
        let ib = b.intensity_unchecked(tb + s);
        diff = diff.max((ia - ib).abs());
        scale = scale.max(ia.abs()).max(ib.abs());
    }
    Ok(if scale > 0.0 { diff / scale } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub tau: f64,
    pub period: f64,
    pub k: u32,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSample {
    pub points: Vec<BranchPoint>,
    /// First delay at which continuation failed, if any.
    pub aborted_at: Option<f64>,
}

impl BranchSample {
    pub fn last_good_tau(&self) -> Option<f64> {
        self.points.last().map(|p| p.tau)
    }

    pub fn min_period(&self) -> Option<f64> {
        self.points.iter().map(|p| p.period).reduce(f64::min)
    }
}

/// Follows a sustained train through increasing delays, seeding each run with
/// the tail of the previous one. The first run starts from a pulse-seeded
/// history. Horizons are `horizon_factor·τ`.
pub fn sweep_tau(params: &ModelParams, taus: &[f64], horizon_factor: f64, opts: &ClassifyOptions) -> Result<BranchSample> {
    if taus.is_empty() {
        return invalid("empty delay range");
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) || taus.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("delays must be positive and strictly increasing");
    }
    if !(horizon_factor >= 20.0) {
        return invalid("horizon factor must be at least 20");
    }
    let mut sample = BranchSample {
        points: Vec::with_capacity(taus.len()),
        aborted_at: None,
    };
    let mut previous: Option<Arc<Trajectory>> = None;
    for &tau in taus {
        let p = params.with_tau(tau);
        let history = match &previous {
            None => pulse_seeded_history(&p, DEFAULT_SEED_KICK)?,
            Some(traj) => HistorySpec::tail_of(Arc::clone(traj)),
        };
        let outcome = run_and_classify(&p, &history, horizon_factor * tau.max(1.0), opts);
        let good = match outcome {
            Ok((stats, traj)) if stats.is_sustained() => {
                sample.points.push(BranchPoint {
                    tau,
                    period: stats.period.expect("sustained trains have a period"),
                    k: stats.k.expect("sustained trains have k"),
                    delta: stats.delta.expect("sustained trains have a drift"),
                });
                previous = Some(Arc::new(traj));
                true
            }
            Ok(_) => false,
            Err(e) if e.is_validation() => return Err(e),
            Err(_) => false,
        };
        if !good {
            if sample.points.is_empty() {
                return Err(Error::NoBranch(format!("no sustained train at the first delay τ = {tau}")));
            }
            sample.aborted_at = Some(tau);
            break;
        }
    }
    Ok(sample)
}

/// Delay where `1 + k·T′(τ)` changes sign along the branch, linearly
/// interpolated between finite-difference slopes at interval midpoints.
/// Needs at least 5 samples and `k ≥ 1`; otherwise `None`.
pub fn fold_estimate(branch: &BranchSample, k: i64) -> Option<f64> {
    if branch.points.len() < 5 || k < 1 {
        return None;
    }
    let g: Vec<(f64, f64)> = branch
        .points
        .windows(2)
        .map(|w| {
            let slope = (w[1].period - w[0].period) / (w[1].tau - w[0].tau);
            (0.5 * (w[0].tau + w[1].tau), 1.0 + k as f64 * slope)
        })
        .collect();
    for w in g.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 == 0.0 {
            return Some(x0);
        }
        if y0 * y1 < 0.0 {
            return Some(x0 + (x1 - x0) * y0 / (y0 - y1));
        }
    }
    g.last().filter(|(_, y)| *y == 0.0).map(|(x, _)| *x)
}

/// Whether the pulse-seeded run at `kappa` ends in a sustained train.
pub fn sustains(params: &ModelParams, kappa: f64, opts: &ClassifyOptions) -> Result<bool> {
    let p = params.with_kappa(kappa);
    let history = pulse_seeded_history(&p, DEFAULT_SEED_KICK)?;
    let stats = classify_response_with(&p, &history, 20.0 * p.tau.max(1.0), opts)?;
    Ok(stats.is_sustained())
}

/// Bisection for the smallest feedback strength sustaining a train at delay
/// `tau`; returns the midpoint of the final bracket.
pub fn scan_kappa_min(params: &ModelParams, tau: f64, bracket: (f64, f64), tol: f64, opts: &ClassifyOptions) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return invalid("κ bracket must satisfy lo < hi");
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return invalid("tolerance must be positive");
    }
    let p = params.with_tau(tau);
    p.with_kappa(lo).validate_forward()?;
    p.with_kappa(hi).validate_forward()?;
    if sustains(&p, lo, opts)? {
        return invalid(format!("lower bracket end κ = {lo} already sustains a train"));
    }
    if !sustains(&p, hi, opts)? {
        return invalid(format!("upper bracket end κ = {hi} does not sustain a train"));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if sustains(&p, mid, opts)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest 1-pulse period among pulse-seeded runs at the given delays,
/// with the delay where it occurs.
pub fn min_period_scan(params: &ModelParams, taus: &[f64], opts: &ClassifyOptions) -> Result<Option<(f64, f64)>> {
    use rayon::prelude::*;
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return invalid("delays must be positive");
    }
    let found: Vec<Result<Option<(f64, f64)>>> = taus
        .par_iter()
        .map(|&tau| {
            let p = params.with_tau(tau);
            let history = pulse_seeded_history(&p, DEFAULT_SEED_KICK)?;
            let stats = classify_response_with(&p, &history, 20.0 * tau.max(1.0), opts)?;
            Ok(match (stats.classification, stats.k, stats.period) {
                (ResponseClass::SustainedTrain, Some(1), Some(t)) => Some((tau, t)),
                _ => None,
            })
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for r in found {
        if let Some((tau, t)) = r? {
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((tau, t));
            }
        }
    }
    Ok(best)
}

/// Seeds `k`-pulse trains for `k = 1..=max_k` at `params.tau` and returns the
/// `k` values that persist as sustained trains with that pulse count.
pub fn coexisting_trains(params: &ModelParams, max_k: u32, opts: &ClassifyOptions) -> Result<Vec<u32>> {
    use rayon::prelude::*;
    let found: Vec<Result<Option<u32>>> = (1..=max_k)
        .into_par_iter()
        .map(|k| {
            let train = match seed_k_train(params, k, opts) {
                Ok(t) => t,
                Err(Error::NoBranch(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let horizon = 20.0 * params.tau.max(1.0);
            let stats = classify_response_with(&train.params, &train.history, horizon, opts)?;
            Ok((stats.is_sustained() && stats.k == Some(k)).then_some(k))
        })
        .collect();
    let mut ks = Vec::new();
    for r in found {
        if let Some(k) = r? {
            ks.push(k);
        }
    }
    Ok(ks)
}
