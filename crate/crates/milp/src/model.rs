use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::Scalar;

/// Index of a variable inside a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Variable<T> {
    pub name: String,
    pub kind: VarKind,
    pub lb: T,
    pub ub: T,
    /// Branching priority; fractional binaries with a higher value are
    /// branched on first.
    pub priority: i32,
}

/// `sum(coeff * var) sense rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint<T> {
    pub coeffs: Vec<(VarId, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> LinearConstraint<T> {
    pub fn new(coeffs: Vec<(VarId, T)>, sense: Sense, rhs: T) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn activity(&self, point: &[T]) -> T {
        self.coeffs.iter().map(|&(v, a)| a * point[v.0]).sum()
    }

    /// Amount by which `point` violates the constraint (zero when satisfied).
    pub fn violation(&self, point: &[T]) -> T {
        let lhs = self.activity(point);
        let zero = T::zero();
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(zero),
            Sense::Ge => (self.rhs - lhs).max(zero),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("constraint references undeclared variable {0}")]
    UnknownVariable(usize),
    #[error("variable `{name}` has bounds [{lb}, {ub}]")]
    BadBounds { name: String, lb: String, ub: String },
    #[error("binary variable `{0}` has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("warm start has {got} entries, model has {expected} variables")]
    WarmStartLength { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
pub struct SolverOptions<T> {
    pub time_limit: Option<Duration>,
    pub integrality_tol: T,
    pub feasibility_tol: T,
    pub relative_gap: T,
    pub absolute_gap: T,
    /// Cut-callback rounds per node before branching.
    pub max_cut_rounds: usize,
    pub node_limit: Option<usize>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            time_limit: None,
            integrality_tol: T::integrality_tol(),
            feasibility_tol: T::feasibility_tol(),
            relative_gap: T::lit(1e-6),
            absolute_gap: T::feasibility_tol(),
            max_cut_rounds: 20,
            node_limit: None,
        }
    }
}

/// A minimization problem over binary and bounded continuous variables.
#[derive(Clone, Debug)]
pub struct Model<T> {
    vars: Vec<Variable<T>>,
    constraints: Vec<LinearConstraint<T>>,
    objective: Vec<T>,
    objective_offset: T,
    warm_start: Option<Vec<T>>,
    pub options: SolverOptions<T>,
}

impl<T: Scalar> Default for Model<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Model<T> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            objective_offset: T::zero(),
            warm_start: None,
            options: SolverOptions::default(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lb: T,
        ub: T,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if !(lb.is_finite() && ub.is_finite()) || lb > ub {
            return Err(ModelError::BadBounds {
                name,
                lb: lb.to_string(),
                ub: ub.to_string(),
            });
        }
        if kind == VarKind::Binary && (lb < T::zero() || ub > T::one()) {
            return Err(ModelError::BinaryBounds(name));
        }
        self.vars.push(Variable {
            name,
            kind,
            lb,
            ub,
            priority: 0,
        });
        self.objective.push(T::zero());
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, T::zero(), T::one())
            .expect("[0,1] bounds are valid")
    }

    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lb: T,
        ub: T,
    ) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    pub fn set_priority(&mut self, var: VarId, priority: i32) -> Result<(), ModelError> {
        let v = self
            .vars
            .get_mut(var.0)
            .ok_or(ModelError::UnknownVariable(var.0))?;
        v.priority = priority;
        Ok(())
    }

    pub fn set_bounds(&mut self, var: VarId, lb: T, ub: T) -> Result<(), ModelError> {
        let v = self
            .vars
            .get_mut(var.0)
            .ok_or(ModelError::UnknownVariable(var.0))?;
        if !(lb.is_finite() && ub.is_finite()) || lb > ub {
            return Err(ModelError::BadBounds {
                name: v.name.clone(),
                lb: lb.to_string(),
                ub: ub.to_string(),
            });
        }
        if v.kind == VarKind::Binary && (lb < T::zero() || ub > T::one()) {
            return Err(ModelError::BinaryBounds(v.name.clone()));
        }
        v.lb = lb;
        v.ub = ub;
        Ok(())
    }

    pub fn set_objective_coeff(&mut self, var: VarId, coeff: T) {
        self.objective[var.0] = coeff;
    }

    pub fn set_objective_offset(&mut self, offset: T) {
        self.objective_offset = offset;
    }

    pub fn add_constraint(&mut self, c: LinearConstraint<T>) -> Result<usize, ModelError> {
        self.check_constraint(&c)?;
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    pub(crate) fn check_constraint(&self, c: &LinearConstraint<T>) -> Result<(), ModelError> {
        match c.coeffs.iter().find(|(v, _)| v.0 >= self.vars.len()) {
            Some((v, _)) => Err(ModelError::UnknownVariable(v.0)),
            None => Ok(()),
        }
    }

    pub fn set_warm_start(&mut self, point: Vec<T>) -> Result<(), ModelError> {
        if point.len() != self.vars.len() {
            return Err(ModelError::WarmStartLength {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        self.warm_start = Some(point);
        Ok(())
    }

    pub fn warm_start(&self) -> Option<&[T]> {
        self.warm_start.as_deref()
    }

    pub fn vars(&self) -> &[Variable<T>] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable<T> {
        &self.vars[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn constraints(&self) -> &[LinearConstraint<T>] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn objective_offset(&self) -> T {
        self.objective_offset
    }

    pub fn objective_value(&self, point: &[T]) -> T {
        self.objective
            .iter()
            .zip(point)
            .map(|(&c, &x)| c * x)
            .sum::<T>()
            + self.objective_offset
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
    }

    /// Largest bound, row or integrality violation of `point`.
    pub fn max_violation(&self, point: &[T]) -> T {
        let mut worst = T::zero();
        for (v, &x) in self.vars.iter().zip(point) {
            worst = worst.max(v.lb - x).max(x - v.ub);
            if v.kind == VarKind::Binary {
                worst = worst.max(x.min(T::one() - x));
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(point));
        }
        worst
    }

    /// Writes the model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        use std::fmt::Write;

        fn term<T: Scalar>(out: &mut String, coeff: T, name: &str, first: bool) {
            let sign = if coeff < T::zero() { "-" } else { "+" };
            if first && sign == "+" {
                let _ = write!(out, " {} {}", coeff.abs(), name);
            } else {
                let _ = write!(out, " {} {} {}", sign, coeff.abs(), name);
            }
        }

        let mut out = String::from("Minimize\n obj:");
        let mut first = true;
        for (i, &c) in self.objective.iter().enumerate() {
            if c != T::zero() {
                term(&mut out, c, &self.vars[i].name, first);
                first = false;
            }
        }
        if first {
            out.push_str(" 0");
        }
        if self.objective_offset != T::zero() {
            let _ = write!(out, " + {} __offset", self.objective_offset);
        }
        out.push_str("\nSubject To\n");
        for (r, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{}:", r);
            let mut first = true;
            for &(v, a) in &c.coeffs {
                term(&mut out, a, &self.vars[v.0].name, first);
                first = false;
            }
            if first {
                out.push_str(" 0 __zero");
            }
            let _ = writeln!(out, " {} {}", c.sense, c.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            if v.kind == VarKind::Binary && v.lb == T::zero() && v.ub == T::one() {
                continue;
            }
            let _ = writeln!(out, " {} <= {} <= {}", v.lb, v.name, v.ub);
        }
        if self.objective_offset != T::zero() {
            out.push_str(" __offset = 1\n");
        }
        let bins: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for chunk in bins.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }
}
