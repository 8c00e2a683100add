//! Method-of-steps integration of the delayed model.
//!
//! Each step is an embedded Dormand–Prince 5(4) step with a PI step-size
//! controller. The delayed intensity is read from cubic Hermite dense output of
//! the already accepted pieces, which is why the step is capped below `τ`.
//! Derivative jumps caused by the history propagate to `s + nτ`; steps land
//! exactly on those points for the first few rounds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{rhs_raw, ModelParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on the step; always further capped at `τ/4`.
    pub max_step: f64,
    pub initial_step: f64,
    /// Smallest admissible step relative to `max(1, |t|)`.
    pub min_step: f64,
    /// Number of delay rounds over which history discontinuities are tracked.
    pub smoothing_rounds: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            max_step: 1.0,
            initial_step: 1e-2,
            min_step: 1e-12,
            smoothing_rounds: 3,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(self, abs_tol: f64, rel_tol: f64) -> Self {
        IntegratorOptions {
            abs_tol,
            rel_tol,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol >= 0.0
            && self.max_step > 0.0
            && self.initial_step > 0.0
            && self.min_step > 0.0
            && [self.abs_tol, self.rel_tol, self.max_step, self.initial_step].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            invalid("integrator tolerances and step bounds must be positive and finite")
        }
    }
}

/// One accepted step, enough for cubic Hermite evaluation on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece {
    pub t0: f64,
    pub t1: f64,
    pub x0: [f64; 3],
    pub x1: [f64; 3],
    pub d0: [f64; 3],
    pub d1: [f64; 3],
}

impl Piece {
    #[inline]
    fn eval(&self, t: f64) -> [f64; 3] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        std::array::from_fn(|k| {
            h00 * self.x0[k] + h10 * self.d0[k] + h01 * self.x1[k] + h11 * self.d1[k]
        })
    }

    #[inline]
    fn eval_intensity(&self, t: f64) -> f64 {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.x0[2]
            + (s3 - 2.0 * s2 + s) * h * self.d0[2]
            + (-2.0 * s3 + 3.0 * s2) * self.x1[2]
            + (s3 - s2) * h * self.d1[2]
    }
}

/// Dense solution on `[t0, t1]`, piecewise cubic Hermite.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    params: ModelParams,
    pieces: Vec<Piece>,
}

impl Trajectory {
    /// Builds a trajectory from contiguous pieces.
    pub fn from_pieces(params: ModelParams, pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return invalid("a trajectory needs at least one piece");
        }
        for w in pieces.windows(2) {
            if w[0].t1 != w[1].t0 {
                return invalid("trajectory pieces must be contiguous");
            }
        }
        if pieces.iter().any(|p| !(p.t1 > p.t0)) {
            return invalid("piece boundaries must be strictly increasing");
        }
        Ok(Trajectory { params, pieces })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn t0(&self) -> f64 {
        self.pieces[0].t0
    }

    pub fn t1(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].t1
    }

    fn piece_index(&self, t: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.t1 < t);
        idx.min(self.pieces.len() - 1)
    }

    /// State at `t`; errors outside `[t0, t1]`.
    pub fn evaluate(&self, t: f64) -> Result<State> {
        if !(t >= self.t0() && t <= self.t1()) {
            return Err(Error::OutOfRange {
                t,
                t0: self.t0(),
                t1: self.t1(),
            });
        }
        Ok(State::from_array(self.eval_unchecked(t)))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> [f64; 3] {
        self.pieces[self.piece_index(t)].eval(t)
    }

    #[inline]
    pub(crate) fn intensity_unchecked(&self, t: f64) -> f64 {
        self.pieces[self.piece_index(t)].eval_intensity(t)
    }

    /// Node times and states, including both ends.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, State)> + '_ {
        std::iter::once((self.t0(), State::from_array(self.pieces[0].x0))).chain(
            self.pieces
                .iter()
                .map(|p| (p.t1, State::from_array(p.x1))),
        )
    }

    /// Uniform samples at spacing `dt`, starting at `t0`; the end point is
    /// always included.
    pub fn sample(&self, dt: f64) -> Result<Vec<(f64, State)>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid("sampling interval must be positive");
        }
        let (t0, t1) = (self.t0(), self.t1());
        let n = ((t1 - t0) / dt).floor() as usize;
        let mut out = Vec::with_capacity(n + 2);
        for j in 0..=n {
            let t = t0 + j as f64 * dt;
            if t < t1 {
                out.push((t, State::from_array(self.eval_unchecked(t))));
            }
        }
        out.push((t1, State::from_array(self.pieces[self.pieces.len() - 1].x1)));
        Ok(out)
    }

    /// Restriction to the pieces overlapping `[from, to]`.
    pub fn window(&self, from: f64, to: f64) -> Result<Trajectory> {
        if !(from >= self.t0() && to <= self.t1() && from < to) {
            return Err(Error::OutOfRange {
                t: if from < self.t0() { from } else { to },
                t0: self.t0(),
                t1: self.t1(),
            });
        }
        let a = self.piece_index(from);
        let b = self.piece_index(to);
        Ok(Trajectory {
            params: self.params,
            pieces: self.pieces[a..=b].to_vec(),
        })
    }

    pub fn max_intensity(&self) -> f64 {
        self.nodes().map(|(_, s)| s.i).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which one-sided limit a history lookup should take at a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    Interior,
}

/// Initial function on `[−τ, 0]`.
#[derive(Debug, Clone)]
pub enum HistorySpec {
    Constant(State),
    /// Off state with a rectangular intensity bump on `[−width, 0]`.
    Perturbed { amplitude: f64, width: f64 },
    /// `x(s) = source(s + shift)`.
    Tail { source: Arc<Trajectory>, shift: f64 },
}

impl HistorySpec {
    /// The default bump: amplitude `0.1`, width `1`.
    pub fn perturbed_default() -> Self {
        HistorySpec::Perturbed {
            amplitude: 0.1,
            width: 1.0,
        }
    }

    /// History given by the last stretch of `source`, ending at `source.t1()`.
    pub fn tail_of(source: impl Into<Arc<Trajectory>>) -> Self {
        let source = source.into();
        let shift = source.t1();
        HistorySpec::Tail { source, shift }
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        match self {
            HistorySpec::Constant(s) => {
                if !s.is_finite() {
                    return invalid("constant history must be finite");
                }
                if s.i < 0.0 {
                    return invalid("history intensity must be nonnegative");
                }
            }
            HistorySpec::Perturbed { amplitude, width } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return invalid("perturbation amplitude must be finite and nonnegative");
                }
                if !(width.is_finite() && *width > 0.0) {
                    return invalid("perturbation width must be positive");
                }
            }
            HistorySpec::Tail { source, shift } => {
                let lo = shift - params.tau;
                if lo < source.t0() - 1e-9 * params.tau.max(1.0) || *shift > source.t1() {
                    return invalid(format!(
                        "history source covers [{}, {}] but [{lo}, {shift}] is needed",
                        source.t0(),
                        source.t1()
                    ));
                }
            }
        }
        Ok(())
    }

    fn value(&self, s: f64, side: Side, params: &ModelParams) -> [f64; 3] {
        match self {
            HistorySpec::Constant(st) => st.to_array(),
            HistorySpec::Perturbed { amplitude, width } => {
                let edge = -width;
                let on = if (s - edge).abs() <= 1e-12 * width.max(1.0) {
                    side != Side::Left
                } else {
                    s > edge
                };
                [params.pump, params.absorber, if on { *amplitude } else { 0.0 }]
            }
            HistorySpec::Tail { source, shift } => {
                let t = (s + shift).clamp(source.t0(), source.t1());
                source.eval_unchecked(t)
            }
        }
    }

    /// Public evaluation of the history at `s ∈ [−τ, 0]`.
    pub fn evaluate(&self, s: f64, params: &ModelParams) -> State {
        State::from_array(self.value(s, Side::Interior, params))
    }

    /// Points in `[−τ, 0)` where the history itself jumps.
    fn jumps(&self, tau: f64) -> Vec<f64> {
        match self {
            HistorySpec::Perturbed { width, .. } if *width < tau => vec![-width],
            _ => Vec::new(),
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a> {
    params: &'a ModelParams,
    history: &'a HistorySpec,
    pieces: Vec<Piece>,
}

impl Stepper<'_> {
    /// `I(s)` for `s ≤` the end of the accepted solution.
    #[inline]
    fn intensity_at(&self, s: f64, side: Side) -> f64 {
        if s <= 0.0 || self.pieces.is_empty() {
            return self.history.value(s.max(-self.params.tau), side, self.params)[2];
        }
        let idx = self.pieces.partition_point(|p| p.t1 < s).min(self.pieces.len() - 1);
        self.pieces[idx].eval_intensity(s)
    }

    #[inline]
    fn f(&self, t: f64, x: &[f64; 3], side: Side) -> [f64; 3] {
        let tau = self.params.tau;
        let delayed = if tau == 0.0 {
            x[2]
        } else {
            self.intensity_at(t - tau, side)
        };
        rhs_raw(x, delayed, self.params)
    }
}

#[inline]
fn comb(x: &[f64; 3], h: f64, terms: &[(f64, &[f64; 3])]) -> [f64; 3] {
    std::array::from_fn(|i| x[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates forward from the history on `[−τ, 0]` up to `t_end`.
pub fn integrate(
    params: &ModelParams,
    history: &HistorySpec,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    params.validate_forward()?;
    opts.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return invalid(format!("t_end must be positive, got {t_end}"));
    }
    history.validate(params)?;

    let tau = params.tau;
    let h_max = if tau > 0.0 {
        opts.max_step.min(0.25 * tau)
    } else {
        opts.max_step
    };

    let mut breakpoints = Vec::new();
    if tau > 0.0 {
        let mut sources = history.jumps(tau);
        sources.push(0.0);
        for s in sources {
            for n in 1..=opts.smoothing_rounds {
                let b = s + n as f64 * tau;
                if b > 0.0 && b < t_end {
                    breakpoints.push(b);
                }
            }
        }
    }
    breakpoints.push(t_end);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));

    let mut st = Stepper {
        params,
        history,
        pieces: Vec::new(),
    };

    let mut t = 0.0;
    let mut x = history.value(0.0, Side::Interior, params);
    let mut k1 = st.f(t, &x, Side::Right);
    let mut h = opts.initial_step.min(h_max);
    let mut err_old: f64 = 1e-4;
    let mut rejected = false;
    let mut bp_idx = 0;

    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - 0.75 * BETA;
    const SAFE: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    while bp_idx < breakpoints.len() {
        let target = breakpoints[bp_idx];
        let remaining = target - t;
        let lands = h >= remaining * (1.0 - 1e-12);
        let step = if lands {
            remaining
        } else if h > 0.5 * remaining {
            // Avoid leaving a sliver in front of the breakpoint.
            0.5 * remaining
        } else {
            h
        };
        if step < opts.min_step * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, h: step });
        }

        let k2 = st.f(t + C[1] * step, &comb(&x, step, &[(A21, &k1)]), Side::Interior);
        let k3 = st.f(
            t + C[2] * step,
            &comb(&x, step, &[(A31, &k1), (A32, &k2)]),
            Side::Interior,
        );
        let k4 = st.f(
            t + C[3] * step,
            &comb(&x, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            Side::Interior,
        );
        let k5 = st.f(
            t + C[4] * step,
            &comb(&x, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            Side::Interior,
        );
        let t_new = if lands { target } else { t + step };
        let k6 = st.f(
            t_new,
            &comb(
                &x,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
            Side::Left,
        );
        let x_new = comb(
            &x,
            step,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = st.f(t_new, &x_new, Side::Left);

        let mut err = 0.0;
        for i in 0..3 {
            let e = step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * x[i].abs().max(x_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / 3.0).sqrt();
        let err = if err.is_finite() && x_new.iter().all(|v| v.is_finite()) {
            err
        } else {
            f64::INFINITY
        };

        let fac11 = err.powf(EXPO);
        if err <= 1.0 {
            let mut fac = fac11 / err_old.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = step / fac;
            if rejected {
                h_new = h_new.min(step);
            }
            rejected = false;
            err_old = err.max(1e-4);

            st.pieces.push(Piece {
                t0: t,
                t1: t_new,
                x0: x,
                x1: x_new,
                d0: k1,
                d1: k7,
            });
            t = t_new;
            x = x_new;
            if lands {
                bp_idx += 1;
                k1 = st.f(t, &x, Side::Right);
                // Keep the proposal made before the step was shortened.
                h = h.max(h_new).min(h_max);
            } else {
                k1 = k7;
                h = h_new.min(h_max);
            }
        } else {
            rejected = true;
            let fac = if err.is_finite() {
                (fac11 / SAFE).min(1.0 / FAC_MIN)
            } else {
                1.0 / FAC_MIN
            };
            h = step / fac;
        }
    }

    Ok(Trajectory {
        params: *params,
        pieces: st.pieces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp() -> ModelParams {
        ModelParams::working_point()
    }

    #[test]
    fn off_state_is_invariant() {
        let p = wp().with_feedback(0.0, 30.0);
        let traj = integrate(&p, &HistorySpec::Constant(p.off_state()), 200.0, &Default::default())
            .unwrap();
        for (_, s) in traj.nodes() {
            assert_eq!(s, p.off_state());
        }
        let mid = traj.evaluate(77.7).unwrap();
        assert_eq!(mid, p.off_state());
    }

    #[test]
    fn argument_errors() {
        let p = wp().with_feedback(0.01, 10.0);
        let h = HistorySpec::Constant(p.off_state());
        let o = IntegratorOptions::default();
        assert!(matches!(integrate(&p, &h, 0.0, &o), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            integrate(&p.with_tau(-1.0), &h, 5.0, &o),
            Err(Error::InvalidArgument(_))
        ));
        let short = integrate(&p, &h, 5.0, &o).unwrap();
        let tail = HistorySpec::tail_of(short);
        assert!(matches!(integrate(&p, &tail, 5.0, &o), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn evaluate_hits_nodes_and_rejects_outside() {
        let p = wp().with_feedback(0.01, 20.0);
        let traj = integrate(
            &p,
            &HistorySpec::Perturbed {
                amplitude: 1.0,
                width: 1.0,
            },
            100.0,
            &Default::default(),
        )
        .unwrap();
        for piece in traj.pieces().iter().step_by(17) {
            assert_eq!(traj.evaluate(piece.t0).unwrap().to_array(), piece.x0);
        }
        assert_eq!(traj.evaluate(0.0).unwrap(), State::new(6.5, 5.8, 1.0));
        assert!(matches!(traj.evaluate(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(traj.evaluate(100.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn steps_land_on_propagated_breakpoints() {
        let p = wp().with_feedback(0.05, 10.0);
        let traj = integrate(
            &p,
            &HistorySpec::Perturbed {
                amplitude: 0.2,
                width: 2.0,
            },
            45.0,
            &Default::default(),
        )
        .unwrap();
        let times: Vec<f64> = traj.nodes().map(|(t, _)| t).collect();
        for b in [8.0, 10.0, 18.0, 20.0, 28.0, 30.0] {
            assert!(times.iter().any(|&t| (t - b).abs() < 1e-12), "missing {b}");
        }
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.pieces().iter().all(|pc| pc.t1 - pc.t0 <= 2.5 + 1e-12));
    }

    #[test]
    fn hermite_dense_output_is_fourth_order() {
        // With I ≡ 0 the gain relaxes as A + (G0 − A) e^{−γ t}.
        let p = ModelParams {
            gamma_g: 2.0,
            ..wp()
        };
        let g0 = 1.0;
        let exact = |t: f64| p.pump + (g0 - p.pump) * (-p.gamma_g * t).exp();
        let mid_error = |h: f64| {
            let o = IntegratorOptions {
                max_step: h,
                initial_step: h,
                ..IntegratorOptions::default().with_tolerances(1e-2, 1e-2)
            };
            let traj = integrate(&p, &HistorySpec::Constant(State::new(g0, 5.8, 0.0)), 2.0, &o)
                .unwrap();
            traj.pieces()
                .iter()
                .map(|pc| {
                    let tm = 0.5 * (pc.t0 + pc.t1);
                    (traj.evaluate(tm).unwrap().g - exact(tm)).abs()
                })
                .fold(0.0, f64::max)
        };
        let e1 = mid_error(0.1);
        let e2 = mid_error(0.05);
        let order = (e1 / e2).log2();
        assert!(order > 3.7, "observed order {order} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn solitary_laser_fires_a_single_pulse() {
        let p = wp();
        let traj = integrate(
            &p,
            &HistorySpec::Perturbed {
                amplitude: 1.0,
                width: 1.0,
            },
            600.0,
            &Default::default(),
        )
        .unwrap();
        assert!(traj.max_intensity() > 10.0);
        let end = traj.evaluate(600.0).unwrap();
        assert!(end.i < 1e-6);
        assert!((end.g - p.pump).abs() < 0.1 && (end.q - p.absorber).abs() < 0.1);
    }

    #[test]
    fn sampling_includes_endpoints() {
        let p = wp().with_feedback(0.0, 5.0);
        let traj = integrate(&p, &HistorySpec::Constant(p.off_state()), 10.0, &Default::default())
            .unwrap();
        let s = traj.sample(3.0).unwrap();
        let ts: Vec<f64> = s.iter().map(|(t, _)| *t).collect();
        assert_eq!(ts, vec![0.0, 3.0, 6.0, 9.0, 10.0]);
    }
}
