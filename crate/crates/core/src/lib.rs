//! Finite element solver for mass-conserving phase separation on deforming
//! curved surfaces.
//!
//! The surface concentration field evolves by a conservative fourth-order
//! phase-field equation with degenerate mobility, coupled to geometrically
//! nonlinear thin-shell mechanics (membrane, bending, in-plane viscosity and
//! concentration-gradient stresses). Both fields are discretized with
//! C1-continuous spline bases built from per-element Bezier extraction, and
//! integrated monolithically in time with the generalized-alpha method,
//! Newton-Raphson corrector and adaptive step-size control.
//!
//! The main entry points are:
//! - [`scenario`] to set up the built-in configurations (periodic square,
//!   pressurized torus, external extraction meshes),
//! - [`sim::Simulation`] to drive a run step by step,
//! - [`cli`] for the command-line front end (`run`, `validate`,
//!   `inspect-mesh`).

pub mod assembly;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod material;
pub mod output;
pub mod scenario;
pub mod sim;
pub mod spline;
pub mod timeint;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
