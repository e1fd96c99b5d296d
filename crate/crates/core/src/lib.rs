//! Core model for the maximal covering location-interdiction problem.
//!
//! A defender opens `p` facilities among candidate sites; an attacker then
//! removes `r` of them. The defender maximizes coverage before the attack plus
//! coverage after the worst-case attack. This crate holds the instance model,
//! the coverage kernels, an exhaustive-enumeration oracle with a single-level
//! LP exporter, and the classical heuristic and metaheuristic baselines.

pub mod baselines;
pub mod coverage;
pub mod error;
pub mod exact;
pub mod exec;
pub mod instance;
pub mod lp;

pub use coverage::{evaluate, optimality_gap, Evaluation, InterdictionPlan, LocationPlan};
pub use error::{Error, Result};
pub use exact::{exact_solve, worst_case_interdiction, ExactCaps};
pub use exec::Execution;
pub use instance::{GenSpec, Instance, Point};
