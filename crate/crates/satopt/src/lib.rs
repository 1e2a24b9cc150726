//! Energy-efficient downlink power allocation for multibeam satellite systems.
//!
//! The library minimizes unmet system capacity plus weighted total radiated
//! power over the per-beam/per-subcarrier transmit powers. The nonconvex
//! objective is handled by successive convex approximation: each outer
//! iteration linearizes the convex part of the capacity expression and
//! globally solves the resulting convex program with a log-barrier Newton
//! method.
//!
//! Modules follow the pipeline:
//!
//! * [`channel`] — beam geometry, antenna pattern, rain fading, link budget.
//! * [`problem`] — SINR, capacity, unmet system capacity, feasibility.
//! * [`subproblem`] — log-power transform, DC split, convex inner solver.
//! * [`sca`] — the outer descent loop and its iteration-bound audit.
//! * [`experiments`] — Monte Carlo harness for the convergence, trade-off
//!   and Pareto studies.
//! * [`cli`] — configuration files, run manifests and CSV/JSON output.

pub mod channel;
pub mod cli;
pub mod experiments;
pub mod problem;
pub mod sca;
pub mod subproblem;

mod error;

pub use error::{Error, Result};
