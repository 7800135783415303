//! Robust feedback control for linear interacting-agent systems driven by
//! additive random inputs.
//!
//! The crate covers the whole pipeline:
//!
//! * [`model`]: the all-to-all consensus system, its uncertainty description
//!   and the three control laws (feedback, mean-corrected feedback, averaged).
//! * [`riccati`]: the reduced two-scalar Riccati systems giving the feedback
//!   gains at finite `N`, in the `N -> inf` limit and over finite horizons.
//! * [`hinf`]: H-infinity robustness certificates for the feedback gains and
//!   generic bounded-real validators (LMI, Riccati, frequency sweep).
//! * [`quadrature`]: Gauss-Hermite / Gauss-Legendre rules matched to the
//!   random inputs.
//! * [`gpc`]: tensor-product polynomial chaos and the Galerkin-projected
//!   coefficient dynamics.
//! * [`sim`]: RK4 integration of projected and sampled dynamics and the
//!   statistics derived from them.
//! * [`meanfield`]: Monte-Carlo particles combined with stochastic Galerkin
//!   in the random space, reconstructed as histograms.
//!
//! Data-parallel inner loops go through [`exec::Exec`]; with the default
//! `parallel` feature they run on rayon, otherwise sequentially. Results are
//! bitwise identical either way.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod gpc;
pub mod hinf;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod quadrature;
pub mod riccati;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
