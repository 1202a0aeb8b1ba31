use thiserror::Error;

use crate::simplex::{Outcome, Simplex, SimplexError};
use crate::{Basis, Model, ModelError, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("numerical instability: residual {0:e} after refactorization")]
    Unstable(f64),
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<SimplexError> for LpError {
    fn from(e: SimplexError) -> Self {
        match e {
            SimplexError::Unstable(r) => LpError::Unstable(r),
            SimplexError::IterationLimit => LpError::IterationLimit,
        }
    }
}

/// Basic optimal solution of the continuous relaxation.
#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    /// Includes the model's objective offset.
    pub objective: T,
    /// One multiplier per constraint, `y = c_B B^-1`.
    pub duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub basis: Basis,
    pub iterations: usize,
}

pub(crate) fn max_iterations(rows: usize, cols: usize) -> usize {
    50 * (rows + cols) + 1000
}

pub(crate) fn build_simplex<T: Scalar>(model: &Model<T>) -> Simplex<T> {
    let lb = model.vars().iter().map(|v| v.lb).collect();
    let ub = model.vars().iter().map(|v| v.ub).collect();
    let mut lp = Simplex::new(
        model.objective().to_vec(),
        lb,
        ub,
        model.options.feasibility_tol,
    );
    for c in model.constraints() {
        let coeffs: Vec<(usize, T)> = c.coeffs.iter().map(|&(v, a)| (v.0, a)).collect();
        lp.add_row(&coeffs, c.sense, c.rhs);
    }
    lp
}

/// Solves the LP relaxation of `model` (integrality dropped).
///
/// `hint` is a basis from an earlier solve of the same model, possibly
/// with fewer rows; it is used when it factorizes.
pub fn lp_solve<T: Scalar>(model: &Model<T>, hint: Option<&Basis>) -> Result<LpSolution<T>, LpError> {
    let mut lp = build_simplex(model);
    if let Some(h) = hint {
        lp.load_basis(h);
    }
    let limit = max_iterations(model.num_constraints(), model.num_vars());
    let outcome = lp.solve(limit)?;
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Infeasible => LpStatus::Infeasible,
    };
    Ok(LpSolution {
        status,
        x: lp.structural_values().to_vec(),
        objective: lp.objective() + model.objective_offset(),
        duals: lp.duals(),
        reduced_costs: lp.reduced_costs().to_vec(),
        basis: lp.basis(),
        iterations: lp.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{LinearConstraint, Sense};

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn single_bound_row() {
        // min x s.t. x >= 0.3, x <= 1
        let mut m = Model::<f64>::new();
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        m.set_objective_coeff(x, 1.0);
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0)], Sense::Ge, 0.3))
            .unwrap();
        let sol = lp_solve(&m, None).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, 0.3);
        assert_close(sol.x[0], 0.3);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = Model::<f64>::new();
        let x = m.add_continuous("x", -5.0, 5.0).unwrap();
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0)], Sense::Le, 0.0))
            .unwrap();
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0)], Sense::Ge, 1.0))
            .unwrap();
        assert_eq!(lp_solve(&m, None).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn strong_duality_and_dual_feasibility() {
        // max 3x + 2y  s.t.  x + y <= 4, x + 3y <= 6, x <= 3 (as bound), y in [0, 10]
        let mut m = Model::<f64>::new();
        let x = m.add_continuous("x", 0.0, 3.0).unwrap();
        let y = m.add_continuous("y", 0.0, 10.0).unwrap();
        m.set_objective_coeff(x, -3.0);
        m.set_objective_coeff(y, -2.0);
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0))
            .unwrap();
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0), (y, 3.0)], Sense::Le, 6.0))
            .unwrap();
        let sol = lp_solve(&m, None).unwrap();
        assert_close(sol.objective, -11.0);
        assert_close(sol.x[0], 3.0);
        assert_close(sol.x[1], 1.0);
        // c.x = y.b + d.x
        let dual_obj: f64 = sol.duals.iter().zip([4.0, 6.0]).map(|(y, b)| y * b).sum::<f64>()
            + sol.reduced_costs.iter().zip(&sol.x).map(|(d, x)| d * x).sum::<f64>();
        assert_close(dual_obj, sol.objective);
        // duals of <= rows are nonpositive in a minimization
        assert!(sol.duals.iter().all(|&y| y <= 1e-12));
    }

    #[test]
    fn equality_rows_and_negative_bounds() {
        // min x - y  s.t. x + y = 1, x - y >= -3, x in [-2, 2], y in [-2, 2]
        let mut m = Model::<f64>::new();
        let x = m.add_continuous("x", -2.0, 2.0).unwrap();
        let y = m.add_continuous("y", -2.0, 2.0).unwrap();
        m.set_objective_coeff(x, 1.0);
        m.set_objective_coeff(y, -1.0);
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0))
            .unwrap();
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0), (y, -1.0)], Sense::Ge, -3.0))
            .unwrap();
        let sol = lp_solve(&m, None).unwrap();
        assert_close(sol.objective, -3.0);
        assert_close(sol.x[0], -1.0);
        assert_close(sol.x[1], 2.0);
    }

    #[test]
    fn warm_hint_reaches_same_optimum() {
        let mut m = Model::<f64>::new();
        let xs: Vec<_> = (0..6)
            .map(|i| m.add_continuous(format!("x{i}"), 0.0, 1.0).unwrap())
            .collect();
        for (i, &x) in xs.iter().enumerate() {
            m.set_objective_coeff(x, -((i + 1) as f64));
        }
        let weights = [3.0, 4.0, 2.0, 5.0, 1.0, 6.0];
        m.add_constraint(LinearConstraint::new(
            xs.iter().zip(weights).map(|(&x, w)| (x, w)).collect(),
            Sense::Le,
            9.0,
        ))
        .unwrap();
        let first = lp_solve(&m, None).unwrap();
        m.add_constraint(LinearConstraint::new(vec![(xs[5], 1.0)], Sense::Le, 0.5))
            .unwrap();
        let cold = lp_solve(&m, None).unwrap();
        let warm = lp_solve(&m, Some(&first.basis)).unwrap();
        assert_close(cold.objective, warm.objective);
    }

    #[test]
    fn works_in_single_precision() {
        let mut m = Model::<f32>::new();
        let x = m.add_continuous("x", 0.0, 4.0).unwrap();
        let y = m.add_continuous("y", 0.0, 4.0).unwrap();
        m.set_objective_coeff(x, -1.0);
        m.set_objective_coeff(y, -1.0);
        m.add_constraint(LinearConstraint::new(vec![(x, 2.0), (y, 1.0)], Sense::Le, 4.0))
            .unwrap();
        m.add_constraint(LinearConstraint::new(vec![(x, 1.0), (y, 2.0)], Sense::Le, 4.0))
            .unwrap();
        let sol = lp_solve(&m, None).unwrap();
        assert!((sol.objective + 8.0 / 3.0).abs() < 1e-4);
    }
}
