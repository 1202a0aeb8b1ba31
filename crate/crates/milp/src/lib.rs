//! A small mixed-binary linear programming engine.
//!
//! Models are dense enough at routing-action scale (a few hundred columns)
//! that a full-tableau dual simplex is competitive with sparse machinery and
//! far simpler to make deterministic. Branch-and-bound uses best-bound node
//! selection, branching on the highest-priority then most fractional
//! binary, and user callbacks for lazy constraints and cutting planes.
//!
//! Everything is generic over [`Scalar`], implemented for `f32` and `f64`.

mod branch;
mod lp;
mod model;
mod scalar;
mod simplex;

pub use branch::{
    is_integral, solve, solve_with, CallbackError, Callbacks, NoCallbacks, Progress, SolveFailure,
    SolveResult, SolveStatus,
};
pub use lp::{lp_solve, LpError, LpSolution, LpStatus};
pub use model::{LinearConstraint, Model, ModelError, Sense, SolverOptions, VarId, VarKind, Variable};
pub use scalar::Scalar;
pub use simplex::Basis;
