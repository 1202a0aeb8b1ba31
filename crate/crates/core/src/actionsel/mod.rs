//! Action selection: pick the route minimizing route distance plus the
//! estimated cost-to-go of the state it leaves behind, by branch-and-cut.

pub mod bounds;
pub mod model;
pub mod separation;
pub mod warm;

use std::time::{Duration, Instant};

use cvrp_milp::{solve_with, CallbackError, Callbacks, LinearConstraint, ModelError, SolveStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bounds::{greedy_tail, lower_bound_expressions, max_lower_bound, BoundKind, LinearExpr, LowerBound, Tail, TailAt};
pub use model::{compute_big_m, ActionModel, BigMMode, BuildOptions, Encoding};
pub use separation::{max_flow, separate_cutsets, separate_relu_cuts};
pub use warm::{warm_start, WarmStart};

use crate::instances::CvrpInstance;
use crate::mdp::{transition, Policy, Route, RouteError, State};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("width {got} does not match instance size {expected}")]
    Width { expected: usize, got: usize },
    #[error("no action from the terminal state")]
    Terminal,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("solver incumbent is not a route: {0}")]
    BadIncumbent(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionConfig {
    pub relu_cuts: bool,
    pub fractional_cutsets: bool,
    pub lower_bounds: bool,
    pub big_m: BigMMode,
    pub branching: BranchOrder,
    /// Encode units with nonnegative output weight without a binary.
    pub relaxed_units: bool,
    /// Seconds per solve; `None` picks 60 for n ≤ 21 and 600 above.
    pub time_limit: Option<f64>,
    pub node_limit: Option<usize>,
    pub warm_start_restarts: usize,
    pub warm_start_passes: usize,
    /// Keep every separated constraint in the [`Selection`].
    pub keep_constraints: bool,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            relu_cuts: true,
            fractional_cutsets: true,
            lower_bounds: true,
            big_m: BigMMode::Lp,
            branching: BranchOrder::default(),
            relaxed_units: true,
            time_limit: None,
            node_limit: None,
            warm_start_restarts: 5,
            warm_start_passes: 200,
            keep_constraints: false,
        }
    }
}

/// Which binaries the branch-and-cut search splits on first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BranchOrder {
    /// Most fractional binary overall.
    Fractional,
    /// City-selection variables before arcs and units.
    #[default]
    CitiesFirst,
    /// Unit activation indicators before routing variables.
    UnitsFirst,
}

impl ActionConfig {
    pub fn time_limit_for(&self, n: usize) -> Duration {
        Duration::from_secs_f64(self.time_limit.unwrap_or(if n <= 21 { 60.0 } else { 600.0 }))
    }
}

/// Per-solve record for diagnostics output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: String,
    pub nodes: usize,
    pub lazy_cuts: usize,
    pub strong_cuts: usize,
    pub lp_iterations: usize,
    pub runtime_ms: f64,
    pub warm_start_objective: f64,
    pub warm_start_accepted: bool,
    /// True when the warm-start route was returned instead of a solver
    /// incumbent.
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub route: Route,
    pub next: State,
    pub route_cost: f64,
    pub tail_value: f64,
    /// `route_cost + tail_value`, recomputed from the route.
    pub objective: f64,
    pub status: SolveStatus,
    pub diagnostics: SolveDiagnostics,
    /// Separated constraints, when requested.
    pub constraints: Vec<LinearConstraint<f64>>,
    /// The model as solved (without separated rows), when constraints are
    /// kept.
    pub model: Option<ActionModel>,
}

struct Separator<'a> {
    am: &'a ActionModel,
    cfg: &'a ActionConfig,
    lazy: usize,
    strong: usize,
}

impl Callbacks<f64> for Separator<'_> {
    fn lazy(&mut self, point: &[f64]) -> Result<Vec<LinearConstraint<f64>>, CallbackError> {
        let c = separate_cutsets(self.am, point, true);
        self.lazy += c.len();
        Ok(c)
    }

    fn cuts(&mut self, point: &[f64]) -> Result<Vec<LinearConstraint<f64>>, CallbackError> {
        let mut c = Vec::new();
        if self.cfg.fractional_cutsets {
            let cs = separate_cutsets(self.am, point, false);
            self.lazy += cs.len();
            c.extend(cs);
        }
        if self.cfg.relu_cuts {
            let rc = separate_relu_cuts(self.am, point);
            self.strong += rc.len();
            c.extend(rc);
        }
        Ok(c)
    }
}

/// Solves the action problem at `s`. The returned objective is recomputed
/// exactly from the chosen route.
pub fn select_action(
    inst: &CvrpInstance,
    s: &State,
    tail: &Tail,
    cfg: &ActionConfig,
    rng: &mut Rng,
) -> Result<Selection, ActionError> {
    if s.n() != inst.n() {
        return Err(ActionError::Width {
            expected: inst.n(),
            got: s.n(),
        });
    }
    if s.is_terminal() {
        return Err(ActionError::Terminal);
    }
    let start = Instant::now();
    let tail_at = tail.at(inst, s);
    let warm = warm_start(inst, s, &tail_at, cfg.warm_start_restarts, cfg.warm_start_passes, rng);
    let mut am = ActionModel::build(
        inst,
        s,
        &tail_at,
        BuildOptions {
            big_m: cfg.big_m,
            relaxed_units: cfg.relaxed_units,
        },
    )?;
    am.model.set_warm_start(am.assignment_for(&warm.route))?;
    match cfg.branching {
        BranchOrder::Fractional => {}
        BranchOrder::CitiesFirst => {
            for &y in &am.y[1..] {
                am.model.set_priority(y, 1)?;
            }
        }
        BranchOrder::UnitsFirst => {
            for z in am.neurons.iter().map(|u| u.z) {
                am.model.set_priority(z, 1)?;
            }
        }
    }
    am.model.options.time_limit = Some(cfg.time_limit_for(inst.n()));
    am.model.options.node_limit = cfg.node_limit;
    // Action objectives are compared at 1e-6 absolute; keep the pruning
    // gap well below that.
    am.model.options.relative_gap = 1e-9;
    am.model.options.absolute_gap = 1e-8;

    let mut sep = Separator {
        am: &am,
        cfg,
        lazy: 0,
        strong: 0,
    };
    let res = solve_with(&am.model, &mut sep);
    let (lazy, strong) = (sep.lazy, sep.strong);

    let evaluate = |route: &Route| -> (State, f64) {
        let next = transition(s, route).expect("route from unvisited cities");
        let tv = tail_at.value(&next);
        (next, tv)
    };
    let mut fallback = false;
    let mut route = match res.incumbent.as_ref().map(|x| am.extract_route(inst, x)) {
        Some(Ok(r)) => r,
        Some(Err(e)) => {
            log::warn!("discarding solver incumbent: {e}");
            fallback = true;
            warm.route.clone()
        }
        None => {
            fallback = true;
            warm.route.clone()
        }
    };
    let (mut next, mut tail_value) = evaluate(&route);
    if !fallback && route.cost() + tail_value > warm.objective + 1e-9 {
        // Only possible when the search stopped early.
        log::debug!("warm start beats the solver incumbent at status {:?}", res.status);
        route = warm.route.clone();
        (next, tail_value) = evaluate(&route);
        fallback = true;
    }
    if let SolveStatus::Error(e) = &res.status {
        log::warn!("action solve failed ({e}); using the best known route");
    }
    let route_cost = route.cost();
    let diagnostics = SolveDiagnostics {
        status: format!("{:?}", res.status),
        nodes: res.nodes,
        lazy_cuts: lazy,
        strong_cuts: strong,
        lp_iterations: res.lp_iterations,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        warm_start_objective: warm.objective,
        warm_start_accepted: res.warm_start_accepted,
        fallback,
    };
    let keep = cfg.keep_constraints;
    Ok(Selection {
        objective: route_cost + tail_value,
        route,
        next,
        route_cost,
        tail_value,
        status: res.status,
        diagnostics,
        constraints: if keep { res.added } else { Vec::new() },
        model: keep.then_some(am),
    })
}

/// The Bellman-rule policy for a fixed tail, with its own random stream
/// for warm starts.
pub struct MilpPolicy<'a> {
    pub inst: &'a CvrpInstance,
    pub tail: &'a Tail,
    pub cfg: &'a ActionConfig,
    pub rng: Rng,
    pub diagnostics: Vec<SolveDiagnostics>,
}

impl<'a> MilpPolicy<'a> {
    pub fn new(inst: &'a CvrpInstance, tail: &'a Tail, cfg: &'a ActionConfig, rng: Rng) -> Self {
        Self {
            inst,
            tail,
            cfg,
            rng,
            diagnostics: Vec::new(),
        }
    }
}

impl Policy for MilpPolicy<'_> {
    fn act(&mut self, s: &State) -> Result<Route, Box<dyn std::error::Error + Send + Sync>> {
        let sel = select_action(self.inst, s, self.tail, self.cfg, &mut self.rng)?;
        self.diagnostics.push(sel.diagnostics);
        Ok(sel.route)
    }
}
