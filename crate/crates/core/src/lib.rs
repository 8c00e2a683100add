//! Simulation and stability analysis for the Yamada laser model with delayed
//! optical self-feedback:
//!
//! ```text
//! G'(t) = γ_G (A − G(t)[1 + I(t)])
//! Q'(t) = γ_Q (B − Q(t)[1 + a I(t)])
//! I'(t) = [G(t) − Q(t) − 1] I(t) + κ I(t − τ)
//! ```
//!
//! The crate is organised by task:
//!
//! * [`model`]: right-hand side, Jacobians, steady states and the
//!   delay-independent fold and transcritical curves.
//! * [`integrator`]: method-of-steps integration with a Dormand–Prince pair
//!   and cubic Hermite dense output.
//! * [`stability`]: characteristic roots of steady states, Hopf curves of the
//!   off state and the double-zero point.
//! * [`floquet`]: monodromy multipliers of periodic pulse trains, the
//!   asymptotic continuous spectrum and the large-delay stability bounds.
//! * [`pulses`]: pulse detection, response classification, delay sweeps and
//!   the empirical onset of sustained pulse trains.

pub mod error;
pub mod floquet;
pub mod integrator;
pub mod model;
pub mod pulses;
pub mod stability;

pub use error::{Error, Result};
pub use model::{ModelParams, State};
