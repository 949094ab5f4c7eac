//! Numerical toolkit for the viscous-dispersive Ostrovsky equation and its
//! zero-viscosity, zero-dispersion limit.
//!
//! * [`spectral`]: periodic grids, FFT derivatives, norms.
//! * [`nonlocal`]: the zero-mean antiderivative `P` and initial data.
//! * [`regularized`]: pseudo-spectral IFRK4 solver with running integrals.
//! * [`limit`]: finite-volume entropy solver and entropy residuals.
//! * [`estimates`]: audits of the uniform-in-ε bounds.
//! * [`convergence`]: ε-sweeps and trajectory comparison.
//! * [`io`]: trajectory and sweep persistence.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod error;
pub mod estimates;
pub mod exec;
pub mod io;
pub mod limit;
pub mod nonlocal;
pub mod regularized;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use exec::Execution;
pub use spectral::{make_grid, Field, Grid};
pub use trajectory::{Coupling, Integrals, RegParams, Regime, State, Trajectory, TrajectoryKind};
