//! Total-variation-diminishing quasi-interpolation on Cartesian Q1 meshes.
//!
//! The crate covers four layers:
//!
//! * [`grid`]: periodic and unit-square meshes, Q1 grid functions, exact L^p norms.
//! * [`interp`]: the box-averaging kernel and the operators `pi_h` (torus),
//!   `c_h` (boundary-rescaled, square) and `i_h` (homothetic, square).
//! * [`variation`]: exact directional variation and quadrature isotropic TV.
//! * [`prox`]: ROF minimization over the Q1 space with a primal-dual method,
//!   and the implicit TV flow built on it.
//!
//! [`studies`] turns the provable properties of the operators into
//! reproducible property and convergence-rate runs, [`pgm`] reads and writes
//! images, and [`cli`] is the `tvdq` command-line front end.

pub mod cli;
pub mod error;
pub mod grid;
pub mod interp;
pub mod parallel;
pub mod pgm;
pub mod prox;
pub mod quadrature;
mod spectral;
pub mod studies;
pub mod variation;

pub use error::{Error, Result};
pub use grid::{DomainKind, DomainSpec, GridFunction, NodeIndex, Norm};
pub use interp::{c_h, i_h, pi_h, HomotheticParams, InputField, Kernel, Operator};
pub use prox::{energy, rof_minimize, tv_flow, DenoiseParams, FlowParams, SolveReport};
pub use variation::{directional_variation, tv_breakdown, tv_iso, Direction, TvBreakdown};
