//! Solvers and verification tools for the discounted Hamilton–Jacobi equation
//! `H(du, q) + αu = 0` on flat tori of dimension one or two.

pub mod error;
pub mod evolve;
pub mod grid;
pub mod oracle;
pub mod phase;
pub mod problem;
pub mod regime;
pub mod report;
pub mod runner;
mod scan;
pub mod sl;

pub use error::{Error, Result};
pub use grid::{GradientMethod, GridField, Interp};
pub use problem::{PhaseState, Problem, ProblemConfig, TorusDomain, Vector};
