//! The Yamada rate equations with delayed intensity feedback.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The seven scalars defining the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Pump strength `A`.
    pub pump: f64,
    /// Absorption `B`.
    pub absorber: f64,
    /// Saturation ratio `a`.
    pub saturation: f64,
    /// Gain relaxation rate `γ_G`.
    pub gamma_g: f64,
    /// Absorber relaxation rate `γ_Q`.
    pub gamma_q: f64,
    /// Feedback strength `κ`.
    pub kappa: f64,
    /// Feedback delay `τ`.
    pub tau: f64,
}

impl ModelParams {
    /// The working point used throughout: `A = 6.5`, `B = 5.8`, `a = 1.8`,
    /// `γ_G = γ_Q = 0.04`, without feedback.
    pub const fn working_point() -> Self {
        ModelParams {
            pump: 6.5,
            absorber: 5.8,
            saturation: 1.8,
            gamma_g: 0.04,
            gamma_q: 0.04,
            kappa: 0.0,
            tau: 0.0,
        }
    }

    pub fn with_feedback(self, kappa: f64, tau: f64) -> Self {
        ModelParams { kappa, tau, ..self }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        ModelParams { kappa, ..self }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        ModelParams { tau, ..self }
    }

    pub fn with_pump(self, pump: f64) -> Self {
        ModelParams { pump, ..self }
    }

    /// Net small-signal gain of the off state, `A − B − 1`.
    pub fn net_gain(&self) -> f64 {
        self.pump - self.absorber - 1.0
    }

    /// The off state `(A, B, 0)`.
    pub fn off_state(&self) -> State {
        State::new(self.pump, self.absorber, 0.0)
    }

    /// Checks finiteness, positivity of the medium parameters and
    /// `0 ≤ κ ≤ 1`. Any real `τ` is accepted.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("A", self.pump),
            ("B", self.absorber),
            ("a", self.saturation),
            ("gamma_G", self.gamma_g),
            ("gamma_Q", self.gamma_q),
            ("kappa", self.kappa),
            ("tau", self.tau),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return invalid(format!("{name} must be finite, got {v}"));
            }
        }
        for (name, v) in &named[..5] {
            if *v <= 0.0 {
                return invalid(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return invalid(format!("kappa must lie in [0, 1], got {}", self.kappa));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus `τ ≥ 0`, required for forward integration.
    pub fn validate_forward(&self) -> Result<()> {
        self.validate()?;
        if self.tau < 0.0 {
            return invalid(format!(
                "forward integration needs tau >= 0, got {}",
                self.tau
            ));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::working_point()
    }
}

/// A point `(G, Q, I)` of the phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub g: f64,
    pub q: f64,
    pub i: f64,
}

impl State {
    pub const fn new(g: f64, q: f64, i: f64) -> Self {
        State { g, q, i }
    }

    pub const fn from_array(x: [f64; 3]) -> Self {
        State::new(x[0], x[1], x[2])
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.g, self.q, self.i]
    }

    pub fn is_finite(&self) -> bool {
        self.g.is_finite() && self.q.is_finite() && self.i.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.g.abs().max(self.q.abs()).max(self.i.abs())
    }
}

/// Right-hand side without input checks; used on the integrator hot path.
#[inline]
pub(crate) fn rhs_raw(x: &[f64; 3], delayed_intensity: f64, p: &ModelParams) -> [f64; 3] {
    let [g, q, i] = *x;
    [
        p.gamma_g * (p.pump - g * (1.0 + i)),
        p.gamma_q * (p.absorber - q * (1.0 + p.saturation * i)),
        (g - q - 1.0) * i + p.kappa * delayed_intensity,
    ]
}

/// Time derivative of `state` given the delayed intensity `I(t − τ)`.
pub fn rhs(state: State, delayed_intensity: f64, params: &ModelParams) -> Result<State> {
    if !state.is_finite() || !delayed_intensity.is_finite() {
        return invalid("rhs needs a finite state and delayed intensity");
    }
    Ok(State::from_array(rhs_raw(
        &state.to_array(),
        delayed_intensity,
        params,
    )))
}

/// Linearisation `y' = M1 y(t) + M2 y(t − τ)` about `state`.
///
/// `M1` is the Jacobian with respect to the instantaneous state and `M2`
/// carries `κ` in its intensity–intensity entry.
pub fn jacobians(state: State, params: &ModelParams) -> (Matrix3<f64>, Matrix3<f64>) {
    let State { g, q, i } = state;
    let p = params;
    #[rustfmt::skip]
    let m1 = Matrix3::new(
        -p.gamma_g * (1.0 + i), 0.0,                             -p.gamma_g * g,
        0.0,                    -p.gamma_q * (1.0 + p.saturation * i), -p.gamma_q * p.saturation * q,
        i,                      -i,                              g - q - 1.0,
    );
    let mut m2 = Matrix3::zeros();
    m2[(2, 2)] = p.kappa;
    (m1, m2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyStateLabel {
    O,
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledState {
    pub label: SteadyStateLabel,
    pub state: State,
    /// Nonnegative intensity; `p` loses this past the transcritical curve.
    pub physical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateSet {
    pub off: LabeledState,
    pub p: Option<LabeledState>,
    pub q: Option<LabeledState>,
    pub discriminant: f64,
}

impl SteadyStateSet {
    pub fn iter(&self) -> impl Iterator<Item = &LabeledState> {
        std::iter::once(&self.off).chain(self.p.iter()).chain(self.q.iter())
    }

    pub fn get(&self, label: SteadyStateLabel) -> Option<State> {
        match label {
            SteadyStateLabel::O => Some(self.off.state),
            SteadyStateLabel::P => self.p.map(|s| s.state),
            SteadyStateLabel::Q => self.q.map(|s| s.state),
        }
    }
}

/// Residual norm of `state` as an equilibrium, where the delayed intensity
/// equals the current one.
pub fn equilibrium_residual(state: State, params: &ModelParams) -> f64 {
    let d = rhs_raw(&state.to_array(), state.i, params);
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

const STEADY_RESIDUAL: f64 = 1e-10;

/// Coefficients `(c2, c1, c0)` of the lasing-branch quadratic
/// `c2 I² + c1 I + c0 = 0`, with the sign of the linear coefficient chosen
/// by `linear_sign`.
fn lasing_quadratic(p: &ModelParams, linear_sign: f64) -> (f64, f64, f64) {
    let s = 1.0 - p.kappa;
    let a = p.saturation;
    let lin = a * p.pump - p.absorber - (1.0 + a) * s;
    (a * s, -linear_sign * lin, -(p.pump - p.absorber - s))
}

/// Roots of `c2 x² + c1 x + c0` ordered ascending, computed without
/// cancellation. `None` when the discriminant is negative.
fn real_quadratic_roots(c2: f64, c1: f64, c0: f64) -> Option<(f64, f64)> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let w = -0.5 * (c1 + c1.signum() * sq);
    let (r1, r2) = if w == 0.0 {
        (0.0, 0.0)
    } else {
        (w / c2, c0 / w)
    };
    Some((r1.min(r2), r1.max(r2)))
}

/// Discriminant `Δ` of the lasing-branch quadratic.
pub fn discriminant(params: &ModelParams) -> f64 {
    let s = 1.0 - params.kappa;
    let a = params.saturation;
    let lin = a * params.pump - params.absorber - (1.0 + a) * s;
    lin * lin + 4.0 * a * s * (params.pump - params.absorber - s)
}

/// The off state and, when `Δ ≥ 0`, the pair `p`, `q` with `I_p ≤ I_q`.
pub fn steady_states(params: &ModelParams) -> Result<SteadyStateSet> {
    if !params.kappa.is_finite() || params.kappa == 1.0 {
        return Err(Error::SingularParameter(
            "steady states are undefined at kappa = 1".into(),
        ));
    }
    let off = LabeledState {
        label: SteadyStateLabel::O,
        state: params.off_state(),
        physical: true,
    };
    let delta = discriminant(params);
    let mut set = SteadyStateSet {
        off,
        p: None,
        q: None,
        discriminant: delta,
    };
    if delta < 0.0 {
        return Ok(set);
    }

    let build = |i: f64| {
        State::new(
            params.pump / (1.0 + i),
            params.absorber / (1.0 + params.saturation * i),
            i,
        )
    };
    // Accept whichever sign of the linear coefficient yields true equilibria.
    for sign in [1.0, -1.0] {
        let (c2, c1, c0) = lasing_quadratic(params, sign);
        let Some((lo, hi)) = real_quadratic_roots(c2, c1, c0) else {
            continue;
        };
        let (p, q) = (build(lo), build(hi));
        if equilibrium_residual(p, params) < STEADY_RESIDUAL
            && equilibrium_residual(q, params) < STEADY_RESIDUAL
        {
            set.p = Some(LabeledState {
                label: SteadyStateLabel::P,
                state: p,
                physical: lo >= 0.0,
            });
            set.q = Some(LabeledState {
                label: SteadyStateLabel::Q,
                state: q,
                physical: hi >= 0.0,
            });
            return Ok(set);
        }
    }
    Err(Error::Numerical(
        "no sign of the lasing quadratic reproduces equilibria".into(),
    ))
}

/// Fold curve `κ_F(A; B, a)` of the lasing steady states.
pub fn kappa_fold(pump: f64, absorber: f64, saturation: f64) -> Result<f64> {
    if saturation == 1.0 {
        return Err(Error::SingularParameter("kappa_fold needs a != 1".into()));
    }
    let prod = saturation * pump * absorber;
    if prod < 0.0 {
        return invalid("kappa_fold needs a*A*B >= 0");
    }
    Ok(((1.0 - pump) * saturation - absorber - 1.0 + 2.0 * prod.sqrt()) / (saturation - 1.0))
}

/// Transcritical curve `κ_T(A; B) = −(A − B − 1)` where `p` meets the off state.
pub fn kappa_transcritical(pump: f64, absorber: f64) -> f64 {
    -(pump - absorber - 1.0)
}
