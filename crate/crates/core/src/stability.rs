//! Linear stability of steady states.
//!
//! At the off state the characteristic function factorises as
//! `(λ + γ_G)(λ + γ_Q) f(λ)` with `f(λ) = −λ + A − B − 1 + κ e^{−τλ}`, so the
//! interesting part of the spectrum lies in the zeros of `f`. For `p` and `q`
//! the full 3×3 determinant `det(λI − M1 − M2 e^{−λτ})` is used instead.
//! Both are solved by Newton's method started from a rectangular grid whose
//! imaginary spacing follows the `2π/|τ|` density of exponential-polynomial
//! roots.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{equilibrium_residual, jacobians, ModelParams, State};

/// Largest accepted `|char(λ)|` for a reported root.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-7;

const REAL_SPACING: f64 = 0.1;
const MAX_IMAG_SPACING: f64 = 0.5;
const NEWTON_MAX_ITER: usize = 80;

/// Closed rectangle of the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Window {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    /// Window symmetric about the real axis.
    pub fn symmetric(re_min: f64, re_max: f64, im_abs: f64) -> Self {
        Window::new(re_min, re_max, -im_abs, im_abs)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.re_min, self.re_max, self.im_min, self.im_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return invalid("search window must be bounded");
        }
        if self.re_min > self.re_max || self.im_min > self.im_max {
            return invalid("search window has min > max");
        }
        Ok(())
    }

    fn grid(&self, imag_spacing: f64) -> Vec<Complex64> {
        let axis = |lo: f64, hi: f64, step: f64| {
            let n = ((hi - lo) / step).ceil().max(0.0) as usize;
            (0..=n)
                .map(move |j| (lo + j as f64 * step).min(hi))
                .collect::<Vec<_>>()
        };
        let res = axis(self.re_min, self.re_max, REAL_SPACING);
        let ims = axis(self.im_min, self.im_max, imag_spacing);
        res.iter()
            .flat_map(|&r| ims.iter().map(move |&i| Complex64::new(r, i)))
            .collect()
    }
}

/// Roots found inside a window together with their residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSet {
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// Set where the derivative nearly vanishes (suspected multiple root).
    pub multiple: Vec<bool>,
    pub window: Window,
}

impl SpectrumSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Number of roots with positive real part.
    pub fn unstable_count(&self) -> usize {
        self.roots.iter().filter(|z| z.re > 0.0).count()
    }

    pub fn max_real_part(&self) -> Option<f64> {
        self.roots.iter().map(|z| z.re).reduce(f64::max)
    }

    /// Every root whose conjugate lies in the window has its conjugate in
    /// the set, to within `tol`.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.roots.iter().all(|z| {
            !self.window.contains(z.conj())
                || self.roots.iter().any(|w| (w - z.conj()).norm() <= tol)
        })
    }

    pub fn contains_near(&self, z: Complex64, tol: f64) -> bool {
        self.roots.iter().any(|w| (w - z).norm() <= tol)
    }
}

/// Transcendental factor `f(λ) = −λ + A − B − 1 + κ e^{−τλ}` of the off state.
pub fn off_factor(lambda: Complex64, p: &ModelParams) -> Complex64 {
    -lambda + p.net_gain() + p.kappa * (-p.tau * lambda).exp()
}

pub fn off_factor_derivative(lambda: Complex64, p: &ModelParams) -> Complex64 {
    -1.0 - p.tau * p.kappa * (-p.tau * lambda).exp()
}

/// Characteristic function of the off state,
/// `(λ + γ_G)(λ + γ_Q)(−λ + A − B − 1 + κ e^{−τλ})`.
pub fn char_off(lambda: Complex64, params: &ModelParams) -> Complex64 {
    (lambda + params.gamma_g) * (lambda + params.gamma_q) * off_factor(lambda, params)
}

fn imag_spacing(tau: f64) -> f64 {
    if tau == 0.0 {
        MAX_IMAG_SPACING
    } else {
        (std::f64::consts::PI / tau.abs()).min(MAX_IMAG_SPACING)
    }
}

fn newton<F>(start: Complex64, f_df: F) -> Option<Complex64>
where
    F: Fn(Complex64) -> (Complex64, Complex64),
{
    let mut z = start;
    for _ in 0..NEWTON_MAX_ITER {
        let (f, df) = f_df(z);
        if !(f.is_finite() && df.is_finite()) || df.norm() == 0.0 {
            return None;
        }
        let dz = f / df;
        z -= dz;
        if !z.is_finite() || z.norm() > 1e8 {
            return None;
        }
        if dz.norm() <= 1e-14 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    // Slow (e.g. multiple-root) convergence is judged by the residual later.
    Some(z)
}

/// Collects verified roots, adding conjugates, dropping duplicates and
/// sorting by real then imaginary part.
fn assemble<R, D>(
    candidates: impl IntoIterator<Item = Complex64>,
    window: Window,
    residual: R,
    derivative: D,
) -> SpectrumSet
where
    R: Fn(Complex64) -> f64,
    D: Fn(Complex64) -> Complex64,
{
    let mut roots: Vec<Complex64> = Vec::new();
    let push = |z: Complex64, roots: &mut Vec<Complex64>| {
        if window.contains(z)
            && residual(z) < RESIDUAL_TOL
            && !roots.iter().any(|w| (w - z).norm() <= DEDUP_TOL)
        {
            roots.push(z);
        }
    };
    for mut z in candidates {
        if z.im.abs() < 1e-10 && residual(Complex64::new(z.re, 0.0)) < RESIDUAL_TOL {
            z.im = 0.0;
        }
        push(z, &mut roots);
        if z.im != 0.0 {
            push(z.conj(), &mut roots);
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let residuals = roots.iter().map(|&z| residual(z)).collect();
    let multiple = roots.iter().map(|&z| derivative(z).norm() < 1e-6).collect();
    SpectrumSet {
        roots,
        residuals,
        multiple,
        window,
    }
}

/// Roots of the off-state characteristic function inside `window`.
///
/// The exact roots `−γ_G`, `−γ_Q` are included when inside. Grid points
/// whose Newton iteration fails are dropped, so an empty result is valid.
pub fn roots_off(params: &ModelParams, window: Window) -> Result<SpectrumSet> {
    window.validate()?;
    let p = *params;
    let starts = window.grid(imag_spacing(p.tau));
    let found: Vec<Option<Complex64>> = starts
        .par_iter()
        .map(|&z0| newton(z0, |z| (off_factor(z, &p), off_factor_derivative(z, &p))))
        .collect();
    let exact = [
        Complex64::new(-p.gamma_g, 0.0),
        Complex64::new(-p.gamma_q, 0.0),
    ];
    let set = assemble(
        exact.into_iter().chain(found.into_iter().flatten()),
        window,
        |z| char_off(z, &p).norm(),
        |z| {
            // d/dλ of the full product.
            let a = z + p.gamma_g;
            let b = z + p.gamma_q;
            let f = off_factor(z, &p);
            b * f + a * f + a * b * off_factor_derivative(z, &p)
        },
    );
    Ok(set)
}

/// A point `(κ(ω), τ(ω))` where the off state has the eigenvalue `iω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfCurvePoint {
    pub omega: f64,
    pub kappa: f64,
    pub tau: f64,
    pub branch: i64,
}

/// Branch indices emitted by default.
pub const DEFAULT_HOPF_BRANCHES: [i64; 5] = [-2, -1, 0, 1, 2];

/// `n` equally spaced frequencies in `[min, max]`, skipping `ω = 0`.
pub fn omega_grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 0 || !(min <= max) {
        return Vec::new();
    }
    if n == 1 {
        return if min != 0.0 { vec![min] } else { Vec::new() };
    }
    let step = (max - min) / (n - 1) as f64;
    (0..n)
        .map(|j| min + j as f64 * step)
        .filter(|w| *w != 0.0)
        .collect()
}

/// Points of the off-state Hopf curve on branch `branch`, parametrised by
/// frequency. Only the positive `κ` branch can reach `κ ∈ (|A − B − 1|, 1]`,
/// and only such points are emitted.
pub fn hopf_curve_off(pump: f64, absorber: f64, omegas: &[f64], branch: i64) -> Vec<HopfCurvePoint> {
    let c = pump - absorber - 1.0;
    omegas
        .iter()
        .filter(|w| **w != 0.0 && w.is_finite())
        .filter_map(|&omega| {
            let kappa = (omega * omega + c * c).sqrt();
            if !(kappa > c.abs() && kappa <= 1.0) {
                return None;
            }
            let arg = (Complex64::new(-c, omega) / kappa).arg();
            let tau = -arg / omega + 2.0 * std::f64::consts::PI * branch as f64 / omega;
            Some(HopfCurvePoint {
                omega,
                kappa,
                tau,
                branch,
            })
        })
        .collect()
}

/// Double-zero point of the off-state factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BtPoint {
    pub tau: f64,
    pub kappa: f64,
    /// `κ ∈ [0, 1]`.
    pub physical: bool,
}

/// `(τ, κ) = (1/(A − B − 1), −(A − B − 1))`, where `f(0) = f'(0) = 0`.
pub fn bt_point(pump: f64, absorber: f64) -> Result<BtPoint> {
    let c = pump - absorber - 1.0;
    if c == 0.0 {
        return Err(Error::SingularParameter(
            "no double-zero point when A = B + 1".into(),
        ));
    }
    let kappa = -c;
    Ok(BtPoint {
        tau: 1.0 / c,
        kappa,
        physical: (0.0..=1.0).contains(&kappa),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffStability {
    Stable,
    SaddleFiniteUnstable,
    InfinitelyManyUnstable,
}

/// Stability class of the off state.
///
/// For `κ ≥ 0` the classification is read off from the signs of `τ`,
/// `A − B − 1` and `κ − |A − B − 1|`; the boundary `κ = κ_T` counts as stable.
/// Negative `κ` with `τ > 0` is settled by counting roots in the disc
/// `|λ − (A − B − 1)| ≤ |κ|`, which contains every root with `Re λ ≥ 0`.
pub fn classify_off(params: &ModelParams) -> Result<OffStability> {
    let c = params.net_gain();
    let kappa = params.kappa;
    let tau = params.tau;
    if !(c.is_finite() && kappa.is_finite() && tau.is_finite()) {
        return invalid("classification needs finite parameters");
    }
    let finite = |unstable: bool| {
        if unstable {
            OffStability::SaddleFiniteUnstable
        } else {
            OffStability::Stable
        }
    };
    if kappa == 0.0 {
        return Ok(finite(c > 0.0));
    }
    if tau == 0.0 {
        let (m1, m2) = jacobians(params.off_state(), params);
        let max_re = (m1 + m2)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(finite(max_re > 0.0));
    }
    if tau < 0.0 {
        return Ok(OffStability::InfinitelyManyUnstable);
    }
    if kappa > 0.0 {
        return Ok(finite(!(c < 0.0 && kappa <= -c)));
    }
    let r = kappa.abs();
    let window = Window::new(0.0, c.max(0.0) + r, -r, r);
    let roots = roots_off(params, window)?;
    Ok(finite(roots.roots.iter().any(|z| z.re > 0.0)))
}

fn det3(m: &[[Complex64; 3]; 3]) -> Complex64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Adjugate (transpose of the cofactor matrix).
fn adj3(m: &[[Complex64; 3]; 3]) -> [[Complex64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ]
}

/// `det(λI − M1 − M2 e^{−λτ})` and its λ-derivative.
fn generic_char(lambda: Complex64, m1: &Matrix3<f64>, m2: &Matrix3<f64>, tau: f64) -> (Complex64, Complex64) {
    let e = (-tau * lambda).exp();
    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut da = [[Complex64::new(0.0, 0.0); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let id = if r == c { 1.0 } else { 0.0 };
            a[r][c] = lambda * id - m1[(r, c)] - m2[(r, c)] * e;
            da[r][c] = Complex64::new(id, 0.0) + tau * m2[(r, c)] * e;
        }
    }
    let adj = adj3(&a);
    let mut tr = Complex64::new(0.0, 0.0);
    for r in 0..3 {
        for c in 0..3 {
            tr += adj[r][c] * da[c][r];
        }
    }
    (det3(&a), tr)
}

/// Characteristic roots of the linearisation about an arbitrary equilibrium.
pub fn roots_generic(steady_state: State, params: &ModelParams, window: Window) -> Result<SpectrumSet> {
    window.validate()?;
    if !steady_state.is_finite() || equilibrium_residual(steady_state, params) > 1e-8 {
        return invalid("roots_generic needs an equilibrium of the model");
    }
    let (m1, m2) = jacobians(steady_state, params);
    let tau = params.tau;
    let residual = |z: Complex64| generic_char(z, &m1, &m2, tau).0.norm();
    let derivative = |z: Complex64| generic_char(z, &m1, &m2, tau).1;

    if tau == 0.0 || params.kappa == 0.0 {
        // Finite-dimensional: eigenvalues of M1 + M2 or of M1.
        let m = if tau == 0.0 { m1 + m2 } else { m1 };
        let eig = m.complex_eigenvalues();
        // Polish so that residuals reflect the characteristic function.
        let polished: Vec<Complex64> = eig
            .iter()
            .map(|&z0| newton(z0, |z| generic_char(z, &m1, &m2, tau)).unwrap_or(z0))
            .collect();
        return Ok(assemble(polished, window, residual, derivative));
    }

    let starts = window.grid(imag_spacing(tau));
    let found: Vec<Option<Complex64>> = starts
        .par_iter()
        .map(|&z0| newton(z0, |z| generic_char(z, &m1, &m2, tau)))
        .collect();
    Ok(assemble(found.into_iter().flatten(), window, residual, derivative))
}
