use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point type the solver is instantiated over.
///
/// Besides the arithmetic bounds, each implementation fixes the default
/// tolerances used by the simplex and the branch-and-bound loop, since a
/// feasibility tolerance that suits `f64` is below the resolution of `f32`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Primal feasibility tolerance on rows and bounds.
    fn feasibility_tol() -> Self;
    /// Distance from 0/1 under which a binary counts as integral.
    fn integrality_tol() -> Self;
    /// Smallest pivot magnitude accepted by the ratio tests.
    fn pivot_tol() -> Self;
    /// Residual above which a basic solution is reported as unstable.
    fn residual_tol() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-7
    }
    fn integrality_tol() -> Self {
        1e-6
    }
    fn pivot_tol() -> Self {
        1e-9
    }
    fn residual_tol() -> Self {
        1e-5
    }
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-4
    }
    fn integrality_tol() -> Self {
        1e-4
    }
    fn pivot_tol() -> Self {
        1e-5
    }
    fn residual_tol() -> Self {
        1e-2
    }
}
