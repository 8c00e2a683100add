//! Floquet multipliers of periodic orbits and the asymptotic continuous
//! spectrum.
//!
//! The monodromy operator acts on histories over `[−τ, 0]`. Only the
//! intensity enters the delayed term, so a history is fully described by `I`
//! on `N + 1` uniform nodes together with `G(0)` and `Q(0)`. Each basis vector
//! is propagated over one period with classical RK4 on a fine uniform grid;
//! off-grid values come from cubic Lagrange interpolation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::integrator::Trajectory;
use crate::model::{jacobians, ModelParams, State};

/// Largest accepted relative periodicity residual.
pub const PERIODICITY_TOL: f64 = 1e-5;
pub const DEFAULT_NODE_SPACING: f64 = 0.25;
pub const MAX_NODES: usize = 4000;
pub const DEFAULT_LEADING: usize = 200;
/// Distance from 1 beyond which the trivial multiplier is flagged.
pub const TRIVIAL_WARN: f64 = 5e-2;

const FINE_STEP: f64 = 0.05;
const CHUNK: usize = 32;

/// One period of a periodic solution together with the preceding delay
/// interval.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    trajectory: Trajectory,
    start: f64,
    period: f64,
    pulses_per_delay: u32,
    residual: f64,
}

impl PeriodicOrbit {
    /// Takes the last period `[t1 − T, t1]` of `traj` as the orbit.
    pub fn from_trajectory(traj: &Trajectory, period: f64, pulses_per_delay: u32) -> Result<Self> {
        let tau = traj.params().tau;
        if !(tau > 0.0 && tau.is_finite()) {
            return invalid("periodic orbits are only analysed for τ > 0");
        }
        if !(period > 0.0 && period.is_finite()) {
            return invalid("period must be positive");
        }
        if pulses_per_delay == 0 {
            return invalid("pulses per delay must be at least 1");
        }
        let start = traj.t1() - period;
        let need = start - tau.max(period);
        if need < traj.t0() {
            return invalid("run is too short to contain one period and its delay history");
        }
        let window = traj.window(need, traj.t1())?;
        let residual = periodicity_residual(&window, start, period);
        if !(residual < PERIODICITY_TOL) {
            return invalid(format!(
                "run is not periodic with period {period}: relative residual {residual:e}"
            ));
        }
        Ok(PeriodicOrbit {
            trajectory: window,
            start,
            period,
            pulses_per_delay,
            residual,
        })
    }

    pub fn params(&self) -> &ModelParams {
        self.trajectory.params()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn pulses_per_delay(&self) -> u32 {
        self.pulses_per_delay
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Absolute time at which the stored period begins.
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// Orbit state at phase `t ∈ [−τ, T]` relative to the period start.
    pub fn state_at(&self, t: f64) -> Result<State> {
        self.trajectory.evaluate(self.start + t)
    }
}

/// `max |x(t) − x(t − T)|` over one period, relative to the largest component
/// range.
fn periodicity_residual(traj: &Trajectory, start: f64, period: f64) -> f64 {
    let n = 4000;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut diff: f64 = 0.0;
    for j in 0..=n {
        let t = start + period * j as f64 / n as f64;
        let x = traj.eval_unchecked(t);
        let y = traj.eval_unchecked(t - period);
        for c in 0..3 {
            lo[c] = lo[c].min(x[c]);
            hi[c] = hi[c].max(x[c]);
            diff = diff.max((x[c] - y[c]).abs());
        }
    }
    let amp = (0..3).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
    if amp > 0.0 {
        diff / amp
    } else {
        diff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloquetSet {
    /// Leading multipliers, by modulus descending.
    pub multipliers: Vec<Complex64>,
    /// Number of history intervals.
    pub nodes: usize,
    /// Multiplier closest to 1.
    pub trivial: Complex64,
    pub warnings: Vec<String>,
}

impl FloquetSet {
    /// Multipliers other than the trivial one.
    pub fn nontrivial(&self) -> Vec<Complex64> {
        let idx = self.multipliers.iter().position(|m| *m == self.trivial);
        self.multipliers
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != idx)
            .map(|(_, m)| *m)
            .collect()
    }

    pub fn max_nontrivial_modulus(&self) -> f64 {
        self.nontrivial().iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// For each `k`-th root of unity the closest not yet chosen multiplier.
    /// The first entry is the trivial multiplier.
    pub fn weak_multipliers(&self, k: u32) -> Vec<Complex64> {
        self.weak_indices(k).into_iter().map(|j| self.multipliers[j]).collect()
    }

    fn weak_indices(&self, k: u32) -> Vec<usize> {
        let mut taken: Vec<usize> = Vec::with_capacity(k as usize);
        for j in 0..k {
            let root = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / k as f64);
            let best = self
                .multipliers
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .min_by(|a, b| (a.1 - root).norm().total_cmp(&(b.1 - root).norm()));
            if let Some((i, _)) = best {
                taken.push(i);
            }
        }
        taken
    }

    /// Multipliers left after removing the `k` weak ones and those of modulus
    /// at most `floor`.
    pub fn pseudo_continuous(&self, k: u32, floor: f64) -> Vec<Complex64> {
        let weak = self.weak_indices(k);
        self.multipliers
            .iter()
            .enumerate()
            .filter(|(i, m)| !weak.contains(i) && m.norm() > floor)
            .map(|(_, m)| *m)
            .collect()
    }

    /// Number of multipliers with `||μ| − 1| < tol`.
    pub fn count_near_unit_circle(&self, tol: f64) -> usize {
        self.multipliers.iter().filter(|m| (m.norm() - 1.0).abs() < tol).count()
    }

    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        // The tail of a truncated list may hold one member of a pair.
        let floor = self.multipliers.last().map(|m| m.norm()).unwrap_or(0.0);
        self.multipliers.iter().all(|m| {
            m.norm() <= floor + tol || self.multipliers.iter().any(|w| (w - m.conj()).norm() <= tol)
        })
    }
}

/// Default number of history intervals: spacing at most 0.25, capped.
pub fn default_nodes(tau: f64) -> usize {
    ((tau / DEFAULT_NODE_SPACING).ceil() as usize).clamp(4, MAX_NODES)
}

/// Weights of the cubic Lagrange interpolant through offsets −1, 0, 1, 2 at
/// fractional position `f`.
#[inline]
fn lagrange4(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

/// Stencil `(first index, weights)` for position `x` on a uniform grid with
/// indices `lo..=hi`.
fn stencil(x: f64, lo: i64, hi: i64) -> (i64, [f64; 4]) {
    let i0 = x.floor() as i64;
    let nearest = x.round() as i64;
    if (x - nearest as f64).abs() < 1e-9 && (lo..=hi).contains(&nearest) {
        return (nearest - 1, [0.0, 1.0, 0.0, 0.0]);
    }
    let i0 = i0.clamp(lo + 1, hi - 2);
    (i0 - 1, lagrange4(x - i0 as f64))
}

/// Leading Floquet multipliers of `orbit`.
///
/// `nodes` defaults to [`default_nodes`]; `leading` defaults to 200.
pub fn monodromy_multipliers(orbit: &PeriodicOrbit, nodes: Option<usize>, leading: Option<usize>) -> Result<FloquetSet> {
    let params = *orbit.params();
    let tau = params.tau;
    let n = nodes.unwrap_or_else(|| default_nodes(tau));
    let m = leading.unwrap_or(DEFAULT_LEADING);
    if n < 4 {
        return invalid("monodromy discretisation needs at least 4 history intervals");
    }
    if m == 0 {
        return invalid("number of leading multipliers must be positive");
    }
    let mono = monodromy_matrix(orbit, n)?;
    let dim = mono.nrows();
    let mut eig: Vec<Complex64> = mono.complex_eigenvalues().iter().copied().collect();
    if eig.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("eigenvalue solver returned non-finite values".into()));
    }
    eig.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    eig.truncate(m.min(dim));
    let trivial = *eig
        .iter()
        .min_by(|a, b| (*a - 1.0).norm().total_cmp(&(*b - 1.0).norm()))
        .expect("at least one eigenvalue");
    let mut warnings = Vec::new();
    let dev = (trivial - 1.0).norm();
    if dev > TRIVIAL_WARN {
        warnings.push(format!(
            "trivial multiplier deviates from 1 by {dev:.3e}; increase the number of nodes (now {n})"
        ));
    }
    Ok(FloquetSet {
        multipliers: eig,
        nodes: n,
        trivial,
        warnings,
    })
}

/// Discretised monodromy matrix of size `(N + 3) × (N + 3)`: rows and columns
/// are `I` at the nodes `−τ + jτ/N`, then `G(0)`, `Q(0)`.
pub fn monodromy_matrix(orbit: &PeriodicOrbit, n: usize) -> Result<DMatrix<f64>> {
    let params = *orbit.params();
    let tau = params.tau;
    let period = orbit.period();
    let dx = tau / n as f64;
    let dim = n + 3;

    let h_target = FINE_STEP.min(tau / 8.0).min(dx);
    let steps = (period / h_target).ceil() as usize;
    let h = period / steps as f64;
    // Buffer index i ↔ time i·h, for i in −back..=steps.
    let back = (tau / h).ceil() as i64 + 3;
    let len = (back as usize) + steps + 1;

    // Jacobian along the orbit at step starts and midpoints.
    let m1: Vec<[nalgebra::Matrix3<f64>; 2]> = (0..steps)
        .map(|i| {
            let t = i as f64 * h;
            let a = jacobians(orbit.state_at(t)?, &params).0;
            let b = jacobians(orbit.state_at(t + 0.5 * h)?, &params).0;
            Ok([a, b])
        })
        .collect::<Result<_>>()?;

    // History part of the buffer from the node values.
    let hist_rows: Vec<(usize, i64, [f64; 4])> = (0..=back as usize)
        .map(|r| {
            let s = (r as f64 - back as f64) * h;
            let x = (s.clamp(-tau, 0.0) + tau) / dx;
            let (j0, w) = stencil(x, 0, n as i64);
            (r, j0, w)
        })
        .collect();

    // Delayed-lookup stencils at step starts and midpoints.
    let delayed: Vec<[(i64, [f64; 4]); 2]> = (0..steps)
        .map(|i| {
            let t = i as f64 * h;
            let at = |s: f64| {
                let (i0, w) = stencil(s / h + back as f64, 0, len as i64 - 1);
                (i0, w)
            };
            [at(t - tau), at(t + 0.5 * h - tau)]
        })
        .collect();
    let after_last = {
        let (i0, w) = stencil((steps as f64 * h - tau) / h + back as f64, 0, len as i64 - 1);
        (i0, w)
    };

    let kappa = params.kappa;
    let columns: Vec<Vec<f64>> = (0..dim)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .flat_map_iter(|cols| {
            let cw = cols.len();
            let mut buf = vec![0.0; len * cw];
            for &(r, j0, w) in &hist_rows {
                for (c, &col) in cols.iter().enumerate() {
                    if col <= n {
                        let j = col as i64 - j0;
                        if (0..4).contains(&j) {
                            buf[r * cw + c] = w[j as usize];
                        }
                    }
                }
            }
            let mut y: Vec<[f64; 3]> = cols
                .iter()
                .map(|&col| match col {
                    c if c == n => [0.0, 0.0, 1.0],
                    c if c == n + 1 => [1.0, 0.0, 0.0],
                    c if c == n + 2 => [0.0, 1.0, 0.0],
                    _ => [0.0; 3],
                })
                .collect();
            let lookup = |buf: &[f64], st: &(i64, [f64; 4]), c: usize| -> f64 {
                let (i0, w) = st;
                (0..4)
                    .filter(|&q| w[q] != 0.0)
                    .map(|q| w[q] * buf[(*i0 as usize + q) * cw + c])
                    .sum()
            };
            let f = |m: &nalgebra::Matrix3<f64>, y: &[f64; 3], d: f64| -> [f64; 3] {
                [
                    m[(0, 0)] * y[0] + m[(0, 1)] * y[1] + m[(0, 2)] * y[2],
                    m[(1, 0)] * y[0] + m[(1, 1)] * y[1] + m[(1, 2)] * y[2],
                    m[(2, 0)] * y[0] + m[(2, 1)] * y[1] + m[(2, 2)] * y[2] + kappa * d,
                ]
            };
            let axpy = |y: &[f64; 3], a: f64, k: &[f64; 3]| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
            for i in 0..steps {
                let end_jac = if i + 1 < steps { &m1[i + 1][0] } else { &m1[0][0] };
                let end_st = if i + 1 < steps { &delayed[i + 1][0] } else { &after_last };
                for c in 0..cw {
                    let d0 = lookup(&buf, &delayed[i][0], c);
                    let dm = lookup(&buf, &delayed[i][1], c);
                    let d1 = lookup(&buf, end_st, c);
                    let yc = y[c];
                    let k1 = f(&m1[i][0], &yc, d0);
                    let k2 = f(&m1[i][1], &axpy(&yc, 0.5 * h, &k1), dm);
                    let k3 = f(&m1[i][1], &axpy(&yc, 0.5 * h, &k2), dm);
                    // The orbit is T-periodic, so the end of the last step
                    // uses the Jacobian at phase 0.
                    let k4 = f(end_jac, &axpy(&yc, h, &k3), d1);
                    let next: [f64; 3] =
                        std::array::from_fn(|q| yc[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]));
                    y[c] = next;
                    buf[(back as usize + i + 1) * cw + c] = next[2];
                }
            }
            (0..cw)
                .map(|c| {
                    let mut out = Vec::with_capacity(dim);
                    for j in 0..=n {
                        let t = period - tau + j as f64 * dx;
                        let st = stencil(t / h + back as f64, 0, len as i64 - 1);
                        out.push(lookup(&buf, &st, c));
                    }
                    out.push(y[c][0]);
                    out.push(y[c][1]);
                    out
                })
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(DMatrix::from_fn(dim, dim, |r, c| columns[c][r]))
}

/// Sampled asymptotic continuous spectrum for `k`-pulse trains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcsCurve {
    pub omega: Vec<f64>,
    /// `values[s]` holds the `k` roots at `omega[s]`.
    pub values: Vec<Vec<Complex64>>,
    pub delta0: f64,
    pub k: u32,
    /// Frequencies dropped as singular.
    pub skipped: Vec<f64>,
}

impl AcsCurve {
    /// One-sided distance from `mu` to the sampled curve, treating each root
    /// branch as a polyline in `ω`.
    pub fn distance(&self, mu: Complex64) -> f64 {
        let mut best = f64::INFINITY;
        for s in 0..self.values.len() {
            for b in 0..self.k as usize {
                let a = self.values[s][b];
                best = best.min((mu - a).norm());
                if s + 1 < self.values.len() {
                    best = best.min(segment_distance(mu, a, self.values[s + 1][b]));
                }
            }
        }
        best
    }
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    (p - (a + ab * t.clamp(0.0, 1.0))).norm()
}

/// The `k` roots `μ` of `μ^k = κ e^{iωδ0} / (iω − A + B + 1)` at each `ω`.
pub fn acs(params: &ModelParams, delta0: f64, k: u32, omegas: &[f64]) -> Result<AcsCurve> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if !delta0.is_finite() {
        return invalid("drift must be finite");
    }
    let c = params.net_gain();
    let mut curve = AcsCurve {
        omega: Vec::with_capacity(omegas.len()),
        values: Vec::with_capacity(omegas.len()),
        delta0,
        k,
        skipped: Vec::new(),
    };
    for &w in omegas {
        if !w.is_finite() {
            return invalid("frequencies must be finite");
        }
        let denom = Complex64::new(-c, w);
        if denom.norm() == 0.0 {
            curve.skipped.push(w);
            continue;
        }
        let z = params.kappa * Complex64::new(0.0, w * delta0).exp() / denom;
        let r = z.norm().powf(1.0 / k as f64);
        let phi = z.arg();
        let roots = (0..k)
            .map(|j| Complex64::from_polar(r, (phi + 2.0 * std::f64::consts::PI * j as f64) / k as f64))
            .collect();
        curve.omega.push(w);
        curve.values.push(roots);
    }
    Ok(curve)
}

/// `|det(−iωI + M1(o) + μ^{−k} M2 e^{iωδ0})|`, zero on the curve.
pub fn acs_residual(params: &ModelParams, delta0: f64, k: u32, omega: f64, mu: Complex64) -> f64 {
    let (m1, m2) = jacobians(params.off_state(), params);
    let e = Complex64::new(0.0, omega * delta0).exp() * mu.powi(-(k as i32));
    let iw = Complex64::new(0.0, omega);
    let a = |r: usize, c: usize| {
        let id = if r == c { 1.0 } else { 0.0 };
        -iw * id + m1[(r, c)] + m2[(r, c)] * e
    };
    let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
        + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    det.norm()
}

/// `(κ/|A − B − 1|)^{1/k}`, the modulus of the curve at `ω = 0`.
pub fn acs_max_modulus(params: &ModelParams, k: u32) -> Result<f64> {
    let c = params.net_gain();
    if c == 0.0 {
        return Err(Error::SingularParameter("A = B + 1".into()));
    }
    if k == 0 {
        return invalid("k must be at least 1");
    }
    Ok((params.kappa / c.abs()).powf(1.0 / k as f64))
}

/// `1/(1 − (κ/|A − B − 1|)^{1/k})`; `+∞` when `κ ≥ |A − B − 1|`.
pub fn min_stable_delay(params: &ModelParams, k: u32) -> Result<f64> {
    let r = acs_max_modulus(params, k)?;
    if r >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (1.0 - r))
}

/// `τ·ln|(A − B − 1)/κ|`; `+∞` when `κ = 0`.
pub fn max_pulses(params: &ModelParams, tau: f64) -> Result<f64> {
    let c = params.net_gain();
    if c == 0.0 {
        return Err(Error::SingularParameter("A = B + 1".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid("τ must be positive");
    }
    if params.kappa == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(tau * (c / params.kappa).abs().ln())
}
