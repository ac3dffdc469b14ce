//! Drift-randomized Milstein-Galerkin finite element (DRMGFE) solver for
//! semilinear stochastic evolution equations with multiplicative Q-Wiener
//! noise, plus a coupled-path Monte Carlo harness that measures strong errors
//! and experimental orders of convergence.
//!
//! The crate is organized along the pipeline:
//!
//! * [`fem`] — P1 finite elements on uniform meshes of (0,1) and (0,1)^2:
//!   mass/stiffness assembly, L2 projection, and the resolvent solves
//!   `(M + alpha K) x = M v` that realize the implicit time steps.
//! * [`noise`] — truncated Karhunen-Loeve simulation of the Q-Wiener process
//!   with counter-addressable randomness, so every refinement level of a
//!   Monte Carlo sample reads increments of one and the same Brownian path.
//! * [`problem`] — drift/diffusion/initial-datum definitions, including the
//!   built-in benchmark problem `du = (-Au + 1/(1+|u|)) dt + delta u dW`.
//! * [`scheme`] — the DRMGFE two-stage stepper and the semi-implicit
//!   Milstein-Galerkin baseline, sharing the commutative-noise Milstein
//!   correction.
//! * [`oracle`] — independent reference computations (exact heat solutions,
//!   analytic FEM spectra, statistical noise checks) used by tests and by the
//!   `validate` CLI subcommand.
//! * [`harness`] — coupled-path strong-error studies and EOC reports.
//! * [`config`] — ini-style study configuration, built-in presets, parsing.

pub mod config;
pub mod fem;
pub mod harness;
pub mod noise;
pub mod oracle;
pub mod problem;
pub mod scheme;
