//! Best-bound branch-and-cut over the dual simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::{build_simplex, max_iterations};
use crate::simplex::{Outcome, SimplexError};
use crate::{LinearConstraint, Model, ModelError, Scalar, VarKind};

pub type CallbackError = Box<dyn std::error::Error + Send + Sync>;

/// Problem-specific constraint generation.
///
/// `lazy` is called on every integer-feasible candidate; any returned
/// constraint that the candidate violates is added and the candidate is
/// rejected. `cuts` is called on fractional LP optima. Returned constraints
/// must be valid for every integer-feasible point of the true model.
pub trait Callbacks<T> {
    fn lazy(&mut self, _point: &[T]) -> Result<Vec<LinearConstraint<T>>, CallbackError> {
        Ok(Vec::new())
    }

    fn cuts(&mut self, _point: &[T]) -> Result<Vec<LinearConstraint<T>>, CallbackError> {
        Ok(Vec::new())
    }
}

pub struct NoCallbacks;

impl<T> Callbacks<T> for NoCallbacks {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveFailure {
    #[error("LP relaxation unstable (residual {0:e})")]
    LpInstability(f64),
    #[error("LP relaxation hit the simplex iteration limit")]
    LpIterationLimit,
    #[error("callback failed: {0}")]
    Callback(String),
    #[error("callback returned an invalid constraint: {0}")]
    BadConstraint(ModelError),
}

impl From<SimplexError> for SolveFailure {
    fn from(e: SimplexError) -> Self {
        match e {
            SimplexError::Unstable(r) => SolveFailure::LpInstability(r),
            SimplexError::IterationLimit => SolveFailure::LpIterationLimit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Optimal,
    /// A limit was hit with an incumbent available.
    Feasible,
    Infeasible,
    /// A limit was hit before any incumbent was found.
    Unknown,
    Error(SolveFailure),
}

#[derive(Clone, Copy, Debug)]
pub struct Progress<T> {
    pub dual_bound: T,
    pub incumbent: Option<T>,
}

#[derive(Clone, Debug)]
pub struct SolveResult<T> {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<T>>,
    pub objective: Option<T>,
    pub dual_bound: T,
    pub nodes: usize,
    pub lazy_added: usize,
    pub cuts_added: usize,
    pub lp_iterations: usize,
    pub elapsed: Duration,
    /// Whether the model's warm start was accepted as the first incumbent.
    pub warm_start_accepted: bool,
    /// Constraints added by callbacks, in the order they were added.
    pub added: Vec<LinearConstraint<T>>,
    /// Bounds after each processed node.
    pub progress: Vec<Progress<T>>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Node<T> {
    fixes: Vec<(usize, T, T)>,
}

struct Key<T> {
    bound: T,
    id: usize,
}

impl<T: Scalar> PartialEq for Key<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Key<T> {}
impl<T: Scalar> PartialOrd for Key<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Key<T> {
    // Max-heap order reversed: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve<T: Scalar>(model: &Model<T>) -> SolveResult<T> {
    solve_with(model, &mut NoCallbacks)
}

pub fn solve_with<T: Scalar, C: Callbacks<T> + ?Sized>(
    model: &Model<T>,
    callbacks: &mut C,
) -> SolveResult<T> {
    Solver::new(model).run(callbacks)
}

struct Solver<'m, T: Scalar> {
    model: &'m Model<T>,
    start: Instant,
    incumbent: Option<(Vec<T>, T)>,
    dual_bound: T,
    nodes: usize,
    lazy_added: usize,
    cuts_added: usize,
    added: Vec<LinearConstraint<T>>,
    progress: Vec<Progress<T>>,
    warm_start_accepted: bool,
}

impl<'m, T: Scalar> Solver<'m, T> {
    fn new(model: &'m Model<T>) -> Self {
        Self {
            model,
            start: Instant::now(),
            incumbent: None,
            dual_bound: T::neg_infinity(),
            nodes: 0,
            lazy_added: 0,
            cuts_added: 0,
            added: Vec::new(),
            progress: Vec::new(),
            warm_start_accepted: false,
        }
    }

    fn cutoff(&self) -> T {
        match &self.incumbent {
            None => T::infinity(),
            Some((_, obj)) => {
                let o = self.model.options.relative_gap * obj.abs();
                *obj - o.max(self.model.options.absolute_gap)
            }
        }
    }

    fn finish(self, status: SolveStatus, lp_iterations: usize) -> SolveResult<T> {
        let (incumbent, objective) = match self.incumbent {
            Some((x, o)) => (Some(x), Some(o)),
            None => (None, None),
        };
        SolveResult {
            status,
            incumbent,
            objective,
            dual_bound: self.dual_bound,
            nodes: self.nodes,
            lazy_added: self.lazy_added,
            cuts_added: self.cuts_added,
            lp_iterations,
            elapsed: self.start.elapsed(),
            warm_start_accepted: self.warm_start_accepted,
            added: self.added,
            progress: self.progress,
        }
    }

    fn violated(&self, cons: Vec<LinearConstraint<T>>, point: &[T]) -> Result<Vec<LinearConstraint<T>>, SolveFailure> {
        let tol = self.model.options.feasibility_tol;
        let mut keep = Vec::new();
        for c in cons {
            self.model
                .check_constraint(&c)
                .map_err(SolveFailure::BadConstraint)?;
            if c.violation(point) > tol {
                keep.push(c);
            }
        }
        Ok(keep)
    }

    fn run<C: Callbacks<T> + ?Sized>(mut self, cb: &mut C) -> SolveResult<T> {
        let model = self.model;
        let opts = &model.options;
        let mut lp = build_simplex(model);
        let binaries: Vec<usize> = model.binaries().map(|v| v.0).collect();
        let base: Vec<(T, T)> = model.vars().iter().map(|v| (v.lb, v.ub)).collect();

        if let Some(ws) = model.warm_start() {
            let integral = binaries
                .iter()
                .all(|&j| (ws[j] - ws[j].round()).abs() <= opts.integrality_tol);
            if integral && model.max_violation(ws) <= opts.feasibility_tol {
                match cb.lazy(ws) {
                    Err(e) => {
                        return self.finish(SolveStatus::Error(SolveFailure::Callback(e.to_string())), 0)
                    }
                    Ok(cons) => match self.violated(cons, ws) {
                        Err(e) => return self.finish(SolveStatus::Error(e), 0),
                        Ok(v) if v.is_empty() => {
                            let obj = model.objective_value(ws);
                            self.incumbent = Some((ws.to_vec(), obj));
                            self.warm_start_accepted = true;
                        }
                        Ok(v) => {
                            for c in v {
                                add_row(&mut lp, &c);
                                self.lazy_added += 1;
                                self.added.push(c);
                            }
                        }
                    },
                }
            }
        }

        let mut heap = BinaryHeap::new();
        let mut store: Vec<Option<Node<T>>> = Vec::new();
        store.push(Some(Node { fixes: Vec::new() }));
        heap.push(Key {
            bound: T::neg_infinity(),
            id: 0,
        });
        let mut applied: Vec<usize> = Vec::new();
        let limit = max_iterations(model.num_constraints(), model.num_vars());
        let mut limit_hit = false;

        while let Some(key) = heap.peek() {
            let key_bound = key.bound;
            self.dual_bound = self.dual_bound.max(key_bound.min(self.cutoff_bound()));
            if key_bound >= self.cutoff() {
                // Best-first: every remaining node is dominated.
                heap.clear();
                break;
            }
            let over_time = opts
                .time_limit
                .is_some_and(|t| self.start.elapsed() >= t);
            let over_nodes = opts.node_limit.is_some_and(|n| self.nodes >= n);
            if over_time || over_nodes {
                limit_hit = true;
                break;
            }
            let key = heap.pop().expect("peeked");
            let node = store[key.id].take().expect("node stored once");

            for &j in &applied {
                lp.set_bounds(j, base[j].0, base[j].1);
            }
            applied.clear();
            for &(j, lo, hi) in &node.fixes {
                lp.set_bounds(j, lo, hi);
                applied.push(j);
            }
            self.nodes += 1;

            let mut rounds = 0usize;
            let mut first = true;
            loop {
                if !first && opts.time_limit.is_some_and(|t| self.start.elapsed() >= t) {
                    // Requeue the unfinished node so the dual bound stays valid.
                    let id = store.len();
                    store.push(Some(Node { fixes: node.fixes.clone() }));
                    heap.push(Key { bound: key_bound, id });
                    limit_hit = true;
                    break;
                }
                first = false;
                let outcome = match lp.solve(limit) {
                    Ok(o) => o,
                    Err(e) => {
                        let it = lp.iterations;
                        return self.finish(SolveStatus::Error(e.into()), it);
                    }
                };
                if outcome == Outcome::Infeasible {
                    break;
                }
                let obj = lp.objective() + model.objective_offset();
                if obj >= self.cutoff() {
                    break;
                }
                let x = lp.structural_values().to_vec();
                // Highest priority first, then most fractional.
                let mut branch_var: Option<(usize, T)> = None;
                let mut branch_pri = i32::MIN;
                for &j in &binaries {
                    let f = (x[j] - x[j].round()).abs();
                    if f <= opts.integrality_tol {
                        continue;
                    }
                    let p = model.vars()[j].priority;
                    if p > branch_pri || (p == branch_pri && branch_var.is_none_or(|(_, bf)| f > bf)) {
                        branch_var = Some((j, f));
                        branch_pri = p;
                    }
                }
                match branch_var {
                    None => {
                        let mut cand = x.clone();
                        for &j in &binaries {
                            cand[j] = cand[j].round();
                        }
                        let cons = match cb.lazy(&cand) {
                            Ok(c) => c,
                            Err(e) => {
                                let it = lp.iterations;
                                return self.finish(
                                    SolveStatus::Error(SolveFailure::Callback(e.to_string())),
                                    it,
                                );
                            }
                        };
                        let cons = match self.violated(cons, &x) {
                            Ok(c) => c,
                            Err(e) => {
                                let it = lp.iterations;
                                return self.finish(SolveStatus::Error(e), it);
                            }
                        };
                        if cons.is_empty() {
                            let cand_obj = model.objective_value(&cand);
                            if self.incumbent.as_ref().is_none_or(|(_, o)| cand_obj < *o) {
                                self.incumbent = Some((cand, cand_obj));
                            }
                            break;
                        }
                        for c in cons {
                            add_row(&mut lp, &c);
                            self.lazy_added += 1;
                            self.added.push(c);
                        }
                    }
                    Some((j, _)) => {
                        if rounds < opts.max_cut_rounds {
                            rounds += 1;
                            let cons = match cb.cuts(&x) {
                                Ok(c) => c,
                                Err(e) => {
                                    let it = lp.iterations;
                                    return self.finish(
                                        SolveStatus::Error(SolveFailure::Callback(e.to_string())),
                                        it,
                                    );
                                }
                            };
                            let cons = match self.violated(cons, &x) {
                                Ok(c) => c,
                                Err(e) => {
                                    let it = lp.iterations;
                                    return self.finish(SolveStatus::Error(e), it);
                                }
                            };
                            if !cons.is_empty() {
                                for c in cons {
                                    add_row(&mut lp, &c);
                                    self.cuts_added += 1;
                                    self.added.push(c);
                                }
                                continue;
                            }
                        }
                        for (lo, hi) in [(T::zero(), T::zero()), (T::one(), T::one())] {
                            let mut fixes = node.fixes.clone();
                            fixes.push((j, lo, hi));
                            let id = store.len();
                            store.push(Some(Node { fixes }));
                            heap.push(Key { bound: obj, id });
                        }
                        break;
                    }
                }
            }
            if limit_hit {
                break;
            }
            let open_min = heap.peek().map_or(T::infinity(), |k| k.bound);
            self.dual_bound = self.dual_bound.max(open_min.min(self.cutoff_bound()));
            self.progress.push(Progress {
                dual_bound: self.dual_bound,
                incumbent: self.incumbent.as_ref().map(|(_, o)| *o),
            });
        }

        let it = lp.iterations;
        if limit_hit {
            let open_min = heap
                .iter()
                .map(|k| k.bound)
                .fold(T::infinity(), |a, b| a.min(b));
            self.dual_bound = self.dual_bound.max(open_min.min(self.cutoff_bound()));
            let status = if self.incumbent.is_some() {
                SolveStatus::Feasible
            } else {
                SolveStatus::Unknown
            };
            return self.finish(status, it);
        }
        match &self.incumbent {
            Some((_, o)) => {
                self.dual_bound = self.dual_bound.max(*o - self.gap_allowance(*o));
                self.finish(SolveStatus::Optimal, it)
            }
            None => {
                self.dual_bound = T::infinity();
                self.finish(SolveStatus::Infeasible, it)
            }
        }
    }

    fn gap_allowance(&self, obj: T) -> T {
        (self.model.options.relative_gap * obj.abs()).max(self.model.options.absolute_gap)
    }

    /// Incumbent value, or infinity; caps the reported dual bound.
    fn cutoff_bound(&self) -> T {
        self.incumbent.as_ref().map_or(T::infinity(), |(_, o)| *o)
    }
}

fn add_row<T: Scalar>(lp: &mut crate::simplex::Simplex<T>, c: &LinearConstraint<T>) {
    let coeffs: Vec<(usize, T)> = c.coeffs.iter().map(|&(v, a)| (v.0, a)).collect();
    lp.add_row(&coeffs, c.sense, c.rhs);
}

/// Exhaustive check used by tests and small models: true when every binary
/// is within tolerance of 0/1.
pub fn is_integral<T: Scalar>(model: &Model<T>, point: &[T]) -> bool {
    model
        .vars()
        .iter()
        .zip(point)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .all(|(_, &x)| (x - x.round()).abs() <= model.options.integrality_tol)
}
