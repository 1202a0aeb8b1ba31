//! The action-selection MILP: a prize-collecting TSP with a knapsack row
//! and an embedded ReLU network in the objective.

use cvrp_milp::{lp_solve, Basis, LinearConstraint, LpStatus, Model, Sense, VarId};
use serde::{Deserialize, Serialize};

use super::bounds::{LinearExpr, TailAt};
use super::ActionError;
use crate::instances::CvrpInstance;
use crate::mdp::{Route, State};
use crate::valuefn::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BigMMode {
    /// Sign analysis over the unit box.
    Interval,
    /// Optimize the pre-activation over the routing LP relaxation.
    #[default]
    Lp,
}

/// How a hidden unit appears in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Output weight zero or pre-activation never positive: `h = 0`.
    Inactive,
    /// Pre-activation never negative: `h = w·t + c`.
    Linear,
    /// Nonnegative output weight: only `h ≥ w·t + c`, `h ≥ 0`. Exact
    /// under minimization because the objective pushes `h` down.
    Relaxed,
    /// Big-M disjunction with binary `z`.
    BigM,
}

#[derive(Clone, Debug)]
pub struct Neuron {
    /// `(t variable, weight)` over unvisited cities with nonzero weight.
    pub coeffs: Vec<(VarId, f64)>,
    /// Bias plus the depot input's contribution.
    pub constant: f64,
    pub m_minus: f64,
    pub m_plus: f64,
    pub encoding: Encoding,
    pub h: VarId,
    pub z: VarId,
}

/// Index maps over the underlying [`Model`]. Local node 0 is the depot and
/// local `k ≥ 1` is `locals[k]`.
#[derive(Clone, Debug)]
pub struct ActionModel {
    pub model: Model<f64>,
    pub locals: Vec<usize>,
    x: Vec<Option<VarId>>,
    pub y: Vec<VarId>,
    /// One per instance city; fixed for visited cities and the depot.
    pub t: Vec<VarId>,
    pub neurons: Vec<Neuron>,
    pub v: VarId,
    net_out_bias: f64,
    net_out_weights: Vec<f64>,
    has_net: bool,
    pub tail_exprs: Vec<LinearExpr>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub big_m: BigMMode,
    /// Use [`Encoding::Relaxed`] for units with nonnegative output weight.
    pub relaxed_units: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            big_m: BigMMode::Lp,
            relaxed_units: true,
        }
    }
}

impl ActionModel {
    pub fn m(&self) -> usize {
        self.locals.len() - 1
    }

    /// Arc variable between local nodes.
    pub fn x(&self, i: usize, j: usize) -> Option<VarId> {
        self.x[i * self.locals.len() + j]
    }

    pub fn build(
        inst: &CvrpInstance,
        s: &State,
        tail: &TailAt<'_>,
        opts: BuildOptions,
    ) -> Result<Self, ActionError> {
        if s.n() != inst.n() {
            return Err(ActionError::Width {
                expected: inst.n(),
                got: s.n(),
            });
        }
        if let Some(net) = tail.net {
            if net.inputs() != inst.n() {
                return Err(ActionError::Width {
                    expected: inst.n(),
                    got: net.inputs(),
                });
            }
        }
        if s.is_terminal() {
            return Err(ActionError::Terminal);
        }
        let mut locals = vec![0];
        locals.extend(s.unvisited());
        let k = locals.len();
        let mut model = Model::<f64>::new();

        let mut x = vec![None; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let id = model.add_binary(format!("x_{}_{}", locals[i], locals[j]));
                    model.set_objective_coeff(id, inst.dist(locals[i], locals[j]));
                    x[i * k + j] = Some(id);
                }
            }
        }
        let y: Vec<VarId> = locals
            .iter()
            .map(|&c| model.add_binary(format!("y_{c}")))
            .collect();
        model.set_bounds(y[0], 1.0, 1.0)?;
        let t: Vec<VarId> = (0..inst.n())
            .map(|c| model.add_binary(format!("t_{c}")))
            .collect();
        model.set_bounds(t[0], 1.0, 1.0)?;
        for c in 1..inst.n() {
            if !s.is_unvisited(c) {
                model.set_bounds(t[c], 0.0, 0.0)?;
            }
        }

        for i in 0..k {
            let mut out: Vec<(VarId, f64)> = (0..k).filter_map(|j| x[i * k + j]).map(|v| (v, 1.0)).collect();
            out.push((y[i], -1.0));
            model.add_constraint(LinearConstraint::new(out, Sense::Eq, 0.0))?;
            let mut inn: Vec<(VarId, f64)> = (0..k).filter_map(|j| x[j * k + i]).map(|v| (v, 1.0)).collect();
            inn.push((y[i], -1.0));
            model.add_constraint(LinearConstraint::new(inn, Sense::Eq, 0.0))?;
        }
        let cap: Vec<(VarId, f64)> = (1..k).map(|l| (y[l], inst.demand(locals[l]) as f64)).collect();
        model.add_constraint(LinearConstraint::new(cap, Sense::Le, inst.capacity() as f64))?;
        for l in 1..k {
            model.add_constraint(LinearConstraint::new(
                vec![(t[locals[l]], 1.0), (y[l], 1.0)],
                Sense::Eq,
                1.0,
            ))?;
        }

        let mut am = ActionModel {
            model,
            locals,
            x,
            y,
            t,
            neurons: Vec::new(),
            v: VarId(0),
            net_out_bias: 0.0,
            net_out_weights: Vec::new(),
            has_net: tail.net.is_some(),
            tail_exprs: Vec::new(),
        };

        // (min, max) of each expression v must dominate.
        let mut ranges: Vec<(f64, f64)> = Vec::new();
        if let Some(net) = tail.net {
            am.add_network(s, net, opts)?;
            let mut lo = net.output_bias();
            let mut hi = lo;
            for (p, nr) in am.neurons.iter().enumerate() {
                let wo = net.output_weight(p);
                let (hlo, hhi) = (am.model.var(nr.h).lb, am.model.var(nr.h).ub);
                lo += (wo * hlo).min(wo * hhi);
                hi += (wo * hlo).max(wo * hhi);
            }
            ranges.push((lo, hi));
        }
        let mut exprs: Vec<LinearExpr> = tail.exprs.iter().map(|b| b.expr.clone()).collect();
        if let Some(g) = &tail.greedy {
            exprs.push(g.clone());
        }
        for e in &exprs {
            ranges.push(e.range());
        }
        let vlo = ranges.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let vhi = ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let (vlo, vhi) = if ranges.is_empty() { (0.0, 0.0) } else { (vlo, vhi.max(vlo)) };
        let v = am.model.add_continuous("v", vlo, vhi)?;
        am.model.set_objective_coeff(v, 1.0);
        am.v = v;
        if let Some(net) = tail.net {
            let mut row = vec![(v, 1.0)];
            for (p, nr) in am.neurons.iter().enumerate() {
                let wo = net.output_weight(p);
                if wo != 0.0 && nr.encoding != Encoding::Inactive {
                    row.push((nr.h, -wo));
                }
            }
            am.model
                .add_constraint(LinearConstraint::new(row, Sense::Ge, net.output_bias()))?;
            am.net_out_bias = net.output_bias();
            am.net_out_weights = (0..net.hidden()).map(|p| net.output_weight(p)).collect();
        }
        for e in &exprs {
            let mut row = vec![(v, 1.0)];
            for &(c, a) in &e.coeffs {
                if s.is_unvisited(c) && a != 0.0 {
                    row.push((am.t[c], -a));
                }
            }
            am.model.add_constraint(LinearConstraint::new(row, Sense::Ge, e.constant))?;
        }
        am.tail_exprs = exprs;
        Ok(am)
    }

    fn add_network(&mut self, s: &State, net: &Network<f64>, opts: BuildOptions) -> Result<(), ActionError> {
        let pre: Vec<(Vec<(VarId, f64)>, f64)> = (0..net.hidden())
            .map(|p| {
                let w = net.weights(p);
                let coeffs = s
                    .unvisited()
                    .filter(|&c| w[c] != 0.0)
                    .map(|c| (self.t[c], w[c]))
                    .collect();
                (coeffs, net.bias(p) + w[0])
            })
            .collect();
        let interval = interval_bounds(&pre);
        // Only big-M units need tight bounds; others just bound h.
        let wants_lp: Vec<bool> = (0..net.hidden())
            .map(|p| {
                let wo = net.output_weight(p);
                let (lo, hi) = interval[p];
                wo != 0.0 && lo < 0.0 && hi > 0.0 && !(opts.relaxed_units && wo > 0.0)
            })
            .collect();
        let bounds = match opts.big_m {
            BigMMode::Interval => interval,
            BigMMode::Lp => lp_bounds(&self.model, &pre, &interval, &wants_lp),
        };
        for (p, ((coeffs, constant), (lo, hi))) in pre.into_iter().zip(bounds).enumerate() {
            let wo = net.output_weight(p);
            let encoding = if wo == 0.0 || hi <= 0.0 {
                Encoding::Inactive
            } else if lo >= 0.0 {
                Encoding::Linear
            } else if opts.relaxed_units && wo > 0.0 {
                Encoding::Relaxed
            } else {
                Encoding::BigM
            };
            let h = self.model.add_continuous(format!("h_{p}"), 0.0, hi.max(0.0))?;
            let z = self.model.add_binary(format!("z_{p}"));
            let row = |sense| {
                let mut r = vec![(h, 1.0)];
                r.extend(coeffs.iter().map(|&(v, w)| (v, -w)));
                LinearConstraint::new(r, sense, constant)
            };
            match encoding {
                Encoding::Inactive => {
                    self.model.set_bounds(h, 0.0, 0.0)?;
                    self.model.set_bounds(z, 0.0, 0.0)?;
                }
                Encoding::Linear => {
                    self.model.set_bounds(h, lo, hi)?;
                    self.model.set_bounds(z, 1.0, 1.0)?;
                    self.model.add_constraint(row(Sense::Eq))?;
                }
                Encoding::Relaxed => {
                    self.model.set_bounds(z, 0.0, 0.0)?;
                    self.model.add_constraint(row(Sense::Ge))?;
                }
                Encoding::BigM => {
                    self.model.add_constraint(row(Sense::Ge))?;
                    // h ≤ w·t + c − M₋(1 − z)
                    let mut r = vec![(h, 1.0), (z, -lo)];
                    r.extend(coeffs.iter().map(|&(v, w)| (v, -w)));
                    self.model
                        .add_constraint(LinearConstraint::new(r, Sense::Le, constant - lo))?;
                    // h ≤ M₊ z
                    self.model
                        .add_constraint(LinearConstraint::new(vec![(h, 1.0), (z, -hi)], Sense::Le, 0.0))?;
                }
            }
            self.neurons.push(Neuron {
                coeffs,
                constant,
                m_minus: lo,
                m_plus: hi,
                encoding,
                h,
                z,
            });
        }
        Ok(())
    }

    /// Full variable assignment for `route` taken from the model's state.
    /// Every constraint of the model (and every valid cut) holds at it.
    pub fn assignment_for(&self, route: &Route) -> Vec<f64> {
        let mut p = vec![0.0; self.model.num_vars()];
        let local_of = |c: usize| self.locals.iter().position(|&l| l == c).expect("route city is unvisited");
        let seq: Vec<usize> = route.cities().into_iter().map(local_of).collect();
        for w in seq.windows(2) {
            p[self.x(w[0], w[1]).expect("no self loops").0] = 1.0;
        }
        p[self.y[0].0] = 1.0;
        p[self.t[0].0] = 1.0;
        for (l, &c) in self.locals.iter().enumerate().skip(1) {
            let on = route.interior().contains(&c);
            p[self.y[l].0] = if on { 1.0 } else { 0.0 };
            p[self.t[c].0] = if on { 0.0 } else { 1.0 };
        }
        let mut net_val = self.net_out_bias;
        for (q, nr) in self.neurons.iter().enumerate() {
            let a = nr.coeffs.iter().fold(nr.constant, |acc, &(v, w)| acc + w * p[v.0]);
            let (h, z) = match nr.encoding {
                Encoding::Inactive => (0.0, 0.0),
                Encoding::Linear => (a, 1.0),
                Encoding::Relaxed => (a.max(0.0), 0.0),
                Encoding::BigM => (a.max(0.0), if a > 0.0 { 1.0 } else { 0.0 }),
            };
            let var = self.model.var(nr.h);
            p[nr.h.0] = h.clamp(var.lb, var.ub);
            p[nr.z.0] = z;
            if nr.encoding != Encoding::Inactive {
                net_val += self.net_out_weights[q] * p[nr.h.0];
            }
        }
        let mut v = if self.has_net { net_val } else { f64::NEG_INFINITY };
        let t_state = self.next_state_of(&p);
        for e in &self.tail_exprs {
            v = v.max(e.eval(&t_state));
        }
        let var = self.model.var(self.v);
        p[self.v.0] = if v.is_finite() { v.clamp(var.lb, var.ub) } else { var.lb };
        p
    }

    /// Next state encoded by the t values of `point` (rounded).
    pub fn next_state_of(&self, point: &[f64]) -> State {
        let n = self.t.len();
        State::from_unvisited(n, (1..n).filter(|&c| point[self.t[c].0] > 0.5))
    }

    /// Follows arcs from the depot, taking the largest outgoing x (lowest
    /// index on ties) at each step.
    pub fn extract_route(&self, inst: &CvrpInstance, point: &[f64]) -> Result<Route, ActionError> {
        let k = self.locals.len();
        let mut cur = 0;
        let mut seen = vec![false; k];
        let mut interior = Vec::new();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..k {
                if let Some(v) = self.x(cur, j) {
                    let val = point[v.0];
                    if val > 0.5 && best.is_none_or(|(_, b)| val > b) {
                        best = Some((j, val));
                    }
                }
            }
            let (nxt, _) = best.ok_or(ActionError::BadIncumbent("dangling arc"))?;
            if nxt == 0 {
                break;
            }
            if std::mem::replace(&mut seen[nxt], true) {
                return Err(ActionError::BadIncumbent("cycle avoids the depot"));
            }
            interior.push(self.locals[nxt]);
            cur = nxt;
        }
        Ok(Route::new(inst, interior)?)
    }
}

fn interval_bounds(pre: &[(Vec<(VarId, f64)>, f64)]) -> Vec<(f64, f64)> {
    pre.iter()
        .map(|(coeffs, c)| {
            coeffs.iter().fold((*c, *c), |(lo, hi), &(_, w)| (lo + w.min(0.0), hi + w.max(0.0)))
        })
        .collect()
}

/// Relative slack added to LP bounds so that rounding in the simplex never
/// makes them invalid.
const BOUND_SLACK: f64 = 1e-7;

fn lp_bounds(
    base: &Model<f64>,
    pre: &[(Vec<(VarId, f64)>, f64)],
    interval: &[(f64, f64)],
    wanted: &[bool],
) -> Vec<(f64, f64)> {
    let mut lp = base.clone();
    let zero = vec![0.0; lp.num_vars()];
    let mut hint: Option<Basis> = None;
    let mut out = interval.to_vec();
    for (p, (coeffs, c)) in pre.iter().enumerate() {
        if !wanted[p] {
            continue;
        }
        for (k, sign) in [(0usize, 1.0), (1, -1.0)] {
            for (j, &z) in zero.iter().enumerate() {
                lp.set_objective_coeff(VarId(j), z);
            }
            for &(v, w) in coeffs {
                lp.set_objective_coeff(v, sign * w);
            }
            let Ok(sol) = lp_solve(&lp, hint.as_ref()) else {
                continue;
            };
            if sol.status != LpStatus::Optimal {
                continue;
            }
            let val = sign * sol.objective + c;
            let pad = BOUND_SLACK * (1.0 + val.abs());
            if k == 0 {
                out[p].0 = (val - pad).max(interval[p].0);
            } else {
                out[p].1 = (val + pad).min(interval[p].1);
            }
            hint = Some(sol.basis);
        }
    }
    out
}

/// Per-unit `(M₋, M₊)` for `net` at state `s` under `mode`.
pub fn compute_big_m(
    inst: &CvrpInstance,
    s: &State,
    net: &Network<f64>,
    mode: BigMMode,
) -> Result<Vec<(f64, f64)>, ActionError> {
    let tail = TailAt {
        net: None,
        exprs: Vec::new(),
        greedy: None,
    };
    let am = ActionModel::build(inst, s, &tail, BuildOptions::default())?;
    let pre: Vec<(Vec<(VarId, f64)>, f64)> = (0..net.hidden())
        .map(|p| {
            let w = net.weights(p);
            let coeffs = s.unvisited().filter(|&c| w[c] != 0.0).map(|c| (am.t[c], w[c])).collect();
            (coeffs, net.bias(p) + w[0])
        })
        .collect();
    let interval = interval_bounds(&pre);
    Ok(match mode {
        BigMMode::Interval => interval,
        BigMMode::Lp => lp_bounds(&am.model, &pre, &interval, &vec![true; pre.len()]),
    })
}
