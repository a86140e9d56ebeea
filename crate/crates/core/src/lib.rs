//! Solvers and numerical certificates for linearly constrained convex programs
//!
//! ```text
//! minimize f(x)  subject to  A x = b
//! ```
//!
//! where `f` is closed, proper and convex. The method of multipliers is run as
//! gradient ascent on the augmented Lagrangian dual
//! `phi_rho(lambda) = inf_x f(x) + <lambda, Ax - b> + (rho/2) |Ax - b|^2`,
//! which is concave and `1/rho`-smooth for every such `f`, with gradient
//! `A x+ - b` at any inner minimizer `x+`. The [`verify`] module turns those
//! facts into sampled, reproducible certificates.

pub mod atoms;
pub mod dual;
mod error;
pub mod ext_real;
pub mod generate;
pub mod inner;
pub mod io;
pub mod problem;
pub mod rng;
pub mod verify;

pub use atoms::{AtomKind, Block, CompositeFunction, ConvexAtom, ProxOperator, SmoothQuadratic};
pub use dual::{
    accelerated_alm, alm, dual_gradient, dual_value, OuterSettings, SolveTrace, TerminationReason, TolSchedule,
    TraceRecord,
};
pub use error::{Error, Result};
pub use ext_real::ExtReal;
pub use generate::{generate, BenchmarkSpec, Family};
pub use inner::{smooth_part_gradient, solve_subproblem, InnerSettings, InnerSolution};
pub use problem::{operator_norm_sq, DualPoint, DualReference, ProblemInstance};
pub use rng::SplitMix64;
pub use verify::{Certificate, GridSpec};
