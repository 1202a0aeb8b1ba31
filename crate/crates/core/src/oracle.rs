//! Brute-force references: exact TSP, exact CVRP, exact action selection
//! and numerical gradients. Independent of the MILP code path.

use thiserror::Error;

use crate::actionsel::{Tail, TailAt};
use crate::instances::CvrpInstance;
use crate::mdp::{Route, State};
use crate::tsp;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{what} limited to {limit}, got {got}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        got: usize,
    },
    #[error("city list must start with the depot and not repeat cities")]
    BadCities,
    #[error("no action from the terminal state")]
    Terminal,
}

/// Exact tour through `cities`, which must include the depot. Returns the
/// cost and the full cycle starting and ending at the depot.
pub fn held_karp_tsp(inst: &CvrpInstance, cities: &[usize]) -> Result<(f64, Vec<usize>), OracleError> {
    if cities.len() > 13 {
        return Err(OracleError::TooLarge {
            what: "tour size",
            limit: 13,
            got: cities.len(),
        });
    }
    if !cities.contains(&0) {
        return Err(OracleError::BadCities);
    }
    let mut rest: Vec<usize> = cities.iter().copied().filter(|&c| c != 0).collect();
    let before = rest.len();
    rest.sort_unstable();
    rest.dedup();
    if rest.len() != before || rest.len() + 1 != cities.len() || rest.iter().any(|&c| c >= inst.n()) {
        return Err(OracleError::BadCities);
    }
    let (cost, order) = tsp::held_karp(inst, &rest);
    let mut cycle = vec![0];
    cycle.extend(order);
    cycle.push(0);
    Ok((cost, cycle))
}

/// Exact tour costs of every demand-feasible customer subset and the
/// optimal cover cost of every subset.
pub struct SubsetTable {
    k: usize,
    tour: Vec<f64>,
    cover: Vec<f64>,
    choice: Vec<u32>,
}

impl SubsetTable {
    pub const MAX_N: usize = 14;

    pub fn new(inst: &CvrpInstance) -> Result<Self, OracleError> {
        let n = inst.n();
        if n > Self::MAX_N {
            return Err(OracleError::TooLarge {
                what: "instance size",
                limit: Self::MAX_N,
                got: n,
            });
        }
        let k = n - 1;
        let full = 1usize << k;
        let mut load = vec![0u64; full];
        let mut tour = vec![f64::INFINITY; full];
        tour[0] = 0.0;
        for mask in 1..full {
            let low = mask.trailing_zeros() as usize;
            load[mask] = load[mask & (mask - 1)] + inst.demand(low + 1) as u64;
            if load[mask] <= inst.capacity() as u64 {
                let cities: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
                tour[mask] = tsp::held_karp(inst, &cities).0;
            }
        }
        let mut cover = vec![f64::INFINITY; full];
        let mut choice = vec![0u32; full];
        cover[0] = 0.0;
        for mask in 1..full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            // Submasks of `rest`, each joined with the lowest city.
            let mut sub = rest;
            loop {
                let r = sub | low;
                let c = tour[r] + cover[mask ^ r];
                if c < cover[mask] {
                    cover[mask] = c;
                    choice[mask] = r as u32;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        Ok(Self { k, tour, cover, choice })
    }

    fn mask_of(&self, cities: impl IntoIterator<Item = usize>) -> usize {
        cities.into_iter().fold(0, |m, c| m | 1 << (c - 1))
    }

    /// Tour cost through the depot and `cities`; infinite when over
    /// capacity.
    pub fn tour_cost(&self, cities: &[usize]) -> f64 {
        self.tour[self.mask_of(cities.iter().copied())]
    }

    /// Optimal cost of serving the unvisited cities of `s`.
    pub fn residual(&self, s: &State) -> f64 {
        self.cover[self.mask_of(s.unvisited())]
    }

    /// City sets of an optimal cover of `s`.
    pub fn residual_sets(&self, s: &State) -> Vec<Vec<usize>> {
        let mut mask = self.mask_of(s.unvisited());
        let mut out = Vec::new();
        while mask != 0 {
            let r = self.choice[mask] as usize;
            out.push((0..self.k).filter(|b| r >> b & 1 == 1).map(|b| b + 1).collect());
            mask ^= r;
        }
        out
    }
}

/// Optimal unbounded-fleet CVRP cost and routes for `n ≤ 14`.
pub fn exact_cvrp(inst: &CvrpInstance) -> Result<(f64, Vec<Route>), OracleError> {
    let table = SubsetTable::new(inst)?;
    let start = State::start(inst.n());
    let routes = table
        .residual_sets(&start)
        .into_iter()
        .map(|set| {
            let order = tsp::held_karp(inst, &set).1;
            Route::new(inst, order).expect("cover uses feasible subsets")
        })
        .collect();
    Ok((table.residual(&start), routes))
}

#[derive(Clone, Debug)]
pub struct EnumeratedAction {
    pub route: Route,
    pub route_cost: f64,
    pub tail_value: f64,
    pub objective: f64,
}

/// Exact minimizer of route cost plus tail over all feasible subsets of
/// the unvisited cities (at most 10). Subsets are visited in lexicographic
/// order and only a strictly better objective replaces the incumbent.
pub fn enumerate_action(inst: &CvrpInstance, s: &State, tail: &Tail) -> Result<EnumeratedAction, OracleError> {
    let u: Vec<usize> = s.unvisited().collect();
    if u.is_empty() {
        return Err(OracleError::Terminal);
    }
    if u.len() > 10 {
        return Err(OracleError::TooLarge {
            what: "unvisited cities",
            limit: 10,
            got: u.len(),
        });
    }
    let tail_at = tail.at(inst, s);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cur = Vec::new();
    dfs(inst, s, &tail_at, &u, 0, 0, &mut cur, &mut best);
    let (_, set) = best.expect("single cities are always feasible");
    let (cost, order) = tsp::held_karp(inst, &set);
    let route = Route::new(inst, order).expect("feasible subset");
    let mut t = s.clone();
    for &c in &set {
        t.visit(c);
    }
    let tail_value = tail_at.value(&t);
    Ok(EnumeratedAction {
        route,
        route_cost: cost,
        tail_value,
        objective: cost + tail_value,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    inst: &CvrpInstance,
    s: &State,
    tail: &TailAt<'_>,
    u: &[usize],
    from: usize,
    load: u32,
    cur: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    for i in from..u.len() {
        let c = u[i];
        let l = load + inst.demand(c);
        if l > inst.capacity() {
            continue;
        }
        cur.push(c);
        let mut t = s.clone();
        for &x in cur.iter() {
            t.visit(x);
        }
        let val = tsp::held_karp(inst, cur).0 + tail.value(&t);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            *best = Some((val, cur.clone()));
        }
        dfs(inst, s, tail, u, i + 1, l, cur, best);
        cur.pop();
    }
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn single_customer() {
        let inst = crate::instances::generate_random(2, 4).unwrap();
        let (c, routes) = exact_cvrp(&inst).unwrap();
        assert_eq!(routes.len(), 1);
        assert_eq!(c, inst.dist(0, 1) + inst.dist(1, 0));
        assert_eq!(held_karp_tsp(&inst, &[0, 1]).unwrap().0, c);
    }

    #[test]
    fn guards() {
        let inst = crate::instances::generate_random(15, 4).unwrap();
        assert!(matches!(exact_cvrp(&inst), Err(OracleError::TooLarge { .. })));
        assert!(held_karp_tsp(&inst, &[1, 2]).is_err());
    }
}
