#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

//! Variational solvers for nonlinear Dirichlet problems on the Sierpinski
//! gasket: exact graph approximations, renormalized energy forms, the
//! discrete energy functional, minimization and mountain-pass critical point
//! searches, and the explicit parameter thresholds under which the
//! concave-convex problem has three nonzero solutions.

pub mod critical;
pub mod energy;
pub mod error;
pub mod functional;
pub mod gasket;
pub mod io;
pub mod nonlinearity;
pub mod thresholds;

pub use critical::{SolutionKind, SolutionReport, SolveOptions};
pub use energy::DiscreteFunction;
pub use error::{Error, Result};
pub use functional::FunctionalContext;
pub use gasket::{build_level, GasketLevel};
pub use nonlinearity::{Nonlinearity, ProblemSpec};
