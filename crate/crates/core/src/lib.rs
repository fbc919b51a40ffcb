//! Numerical laboratory for dyadic shell models of the Euler and inviscid
//! Burgers equations.
//!
//! * [`shell`]: the chain-model family (generic λ-chain, Katz-Pavlovic chain,
//!   Friedlander-Pavlovic chain, Obukhov model) and per-state diagnostics.
//! * [`integrator`]: adaptive Dormand-Prince integration with event location.
//! * [`blowup`]: executable blow-up predicates (admissible constants,
//!   tail-energy crossing cascades, norm-divergence certificates, blow-up
//!   time fits) and the Obukhov steady-state diagnostics.
//! * [`burgers`]: characteristics solution, Fourier asymptotics and spectral
//!   Galerkin machinery for the continuous inviscid Burgers equation.
//! * [`cli_io`]: configuration files, batch runs, sweeps and output files.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blowup;
pub mod burgers;
pub mod cli_io;
pub mod integrator;
pub mod shell;

pub use integrator::{integrate, IntegratorConfig, Termination, Trajectory};
pub use shell::{ModelKind, ModelParams, ShellState, Viscosity};
