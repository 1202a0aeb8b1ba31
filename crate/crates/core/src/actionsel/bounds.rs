//! Linear cost-to-go bounds in the next-state indicator `t`.

use serde::Serialize;

use crate::instances::CvrpInstance;
use crate::mdp::State;
use crate::valuefn::Network;

/// `constant + Σ coeff · t_city`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearExpr {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl LinearExpr {
    pub fn eval(&self, t: &State) -> f64 {
        self.coeffs
            .iter()
            .filter(|(c, _)| t.is_unvisited(*c))
            .fold(self.constant, |a, (_, v)| a + v)
    }

    /// Smallest and largest value over binary `t`.
    pub fn range(&self) -> (f64, f64) {
        self.coeffs.iter().fold((self.constant, self.constant), |(lo, hi), &(_, v)| {
            (lo + v.min(0.0), hi + v.max(0.0))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    OutAndBack,
    ShortestEdges,
    RefinedShortestEdges,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBound {
    pub kind: BoundKind,
    pub expr: LinearExpr,
}

/// Bounds valid for every state `t ⊆ s` on metric instances; empty when
/// the instance is not metric. Out-and-back contributes one expression
/// per city (their max is the bound). Inner minima of the edge bounds are
/// taken over `s`'s unvisited cities plus the depot, which can only
/// underestimate the minima over any `t ⊆ s`.
pub fn lower_bound_expressions(inst: &CvrpInstance, s: &State) -> Vec<LowerBound> {
    if !inst.is_metric() {
        return Vec::new();
    }
    let u: Vec<usize> = s.unvisited().collect();
    let mut out = Vec::with_capacity(u.len() + 2);
    for &i in &u {
        out.push(LowerBound {
            kind: BoundKind::OutAndBack,
            expr: LinearExpr {
                constant: 0.0,
                coeffs: vec![(i, inst.dist(0, i) + inst.dist(i, 0))],
            },
        });
    }
    if u.is_empty() {
        return out;
    }
    // Half the cheapest way in plus half the cheapest way out.
    let half_edges: Vec<(usize, f64)> = u
        .iter()
        .map(|&i| {
            let nbrs = u.iter().copied().chain([0]).filter(|&j| j != i);
            let min_in = nbrs.clone().map(|j| inst.dist(j, i)).fold(f64::INFINITY, f64::min);
            let min_out = nbrs.map(|j| inst.dist(i, j)).fold(f64::INFINITY, f64::min);
            (i, 0.5 * (min_in + min_out))
        })
        .collect();
    out.push(LowerBound {
        kind: BoundKind::ShortestEdges,
        expr: LinearExpr {
            constant: 0.0,
            coeffs: half_edges.clone(),
        },
    });
    // Every route leaves the depot once, and at least Σd/Q routes remain.
    let depot_leg = u.iter().map(|&j| inst.dist(0, j)).fold(f64::INFINITY, f64::min);
    let q = inst.capacity() as f64;
    out.push(LowerBound {
        kind: BoundKind::RefinedShortestEdges,
        expr: LinearExpr {
            constant: 0.0,
            coeffs: half_edges
                .iter()
                .map(|&(i, c)| (i, c + 0.5 * depot_leg * inst.demand(i) as f64 / q))
                .collect(),
        },
    });
    out
}

/// `Σ (Δ_0i + Δ_i0) t_i`: serve every remaining city on its own.
pub fn greedy_tail(inst: &CvrpInstance) -> LinearExpr {
    LinearExpr {
        constant: 0.0,
        coeffs: (1..inst.n()).map(|i| (i, inst.dist(0, i) + inst.dist(i, 0))).collect(),
    }
}

/// Cost-to-go model used in the action objective.
#[derive(Clone, Debug)]
pub enum Tail {
    /// The trivial upper bound; gives the greedy policy.
    Greedy,
    /// `max(net, lower bounds)`; bounds only on metric instances and when
    /// enabled.
    Net {
        net: Network<f64>,
        lower_bounds: bool,
    },
}

/// A [`Tail`] specialized to one parent state.
#[derive(Clone, Debug)]
pub struct TailAt<'a> {
    pub net: Option<&'a Network<f64>>,
    pub exprs: Vec<LowerBound>,
    pub greedy: Option<LinearExpr>,
}

impl Tail {
    pub fn at<'a>(&'a self, inst: &CvrpInstance, s: &State) -> TailAt<'a> {
        match self {
            Tail::Greedy => TailAt {
                net: None,
                exprs: Vec::new(),
                greedy: Some(greedy_tail(inst)),
            },
            Tail::Net { net, lower_bounds } => TailAt {
                net: Some(net),
                exprs: if *lower_bounds {
                    lower_bound_expressions(inst, s)
                } else {
                    Vec::new()
                },
                greedy: None,
            },
        }
    }
}

impl TailAt<'_> {
    pub fn value(&self, t: &State) -> f64 {
        if let Some(g) = &self.greedy {
            return g.eval(t);
        }
        let base = self.net.map_or(f64::NEG_INFINITY, |n| n.forward_state(t));
        self.exprs.iter().map(|b| b.expr.eval(t)).fold(base, f64::max)
    }

    /// Largest lower bound at `t`, or `None` without bounds.
    pub fn lower_bound(&self, t: &State) -> Option<f64> {
        self.exprs.iter().map(|b| b.expr.eval(t)).reduce(f64::max)
    }
}

/// Largest bound at `s` itself (minima over `s`); the clip used when
/// training with bounds. 0 at the terminal state, `None` off metric
/// instances.
pub fn max_lower_bound(inst: &CvrpInstance, s: &State) -> Option<f64> {
    if !inst.is_metric() {
        return None;
    }
    Some(
        lower_bound_expressions(inst, s)
            .iter()
            .map(|b| b.expr.eval(s))
            .fold(0.0, f64::max),
    )
}
