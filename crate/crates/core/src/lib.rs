//! Joint dual-functional transmit beamforming and RIS reflection design for
//! fluctuating (Swerling-I) target detection in RIS-assisted integrated
//! sensing and communication systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`config_io`] parses scenarios, derives labelled RNG streams, writes CSV.
//! * [`channel`] synthesises one Rician realisation of all five channels.
//! * [`signal`] holds the two-path echo model, space-time filtering, SNR/SINR.
//! * [`surrogate`] builds the minorize-maximize surrogates at an expansion point.
//! * [`subsolver`] is a log-barrier interior-point solver for the convex
//!   subproblems.
//! * [`admm`] runs the outer alternating loop over `W`, `phi`, `psi`, `lambda`.
//! * [`manifold`] initialises `phi` with Riemannian conjugate gradients.
//! * [`detection`] is the Monte Carlo detection / ROC harness.
//! * [`experiments`] drives the convergence, sweep and ROC experiments.

pub mod admm;
pub mod channel;
pub mod config_io;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod manifold;
pub mod signal;
pub mod subsolver;
pub mod surrogate;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};

/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = DVector<C64>;
