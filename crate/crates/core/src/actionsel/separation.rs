//! Cutset and ReLU cut separation for [`ActionModel`] points.

use std::collections::VecDeque;

use cvrp_milp::{LinearConstraint, Sense};

use super::model::{ActionModel, Encoding};

/// Violations below this are ignored.
pub const SEPARATION_TOL: f64 = 1e-6;

/// `Σ_{i∈S, j∉S} x_ij ≥ y_k` and `Σ_{i∈S, j∉S} x_ji ≥ y_k` for local set
/// `s` (depot excluded) and representative `k ∈ S`.
fn cutset_pair(am: &ActionModel, in_s: &[bool], k: usize) -> [LinearConstraint<f64>; 2] {
    let n = in_s.len();
    let mut out = Vec::new();
    let mut inn = Vec::new();
    for i in (0..n).filter(|&i| in_s[i]) {
        for j in (0..n).filter(|&j| !in_s[j]) {
            out.push((am.x(i, j).expect("i != j"), 1.0));
            inn.push((am.x(j, i).expect("i != j"), 1.0));
        }
    }
    out.push((am.y[k], -1.0));
    inn.push((am.y[k], -1.0));
    [
        LinearConstraint::new(out, Sense::Ge, 0.0),
        LinearConstraint::new(inn, Sense::Ge, 0.0),
    ]
}

/// Highest `y` value in the set, lowest index on ties.
fn representative(am: &ActionModel, point: &[f64], in_s: &[bool]) -> usize {
    let mut best = usize::MAX;
    for i in (0..in_s.len()).filter(|&i| in_s[i]) {
        if best == usize::MAX || point[am.y[i].0] > point[am.y[best].0] {
            best = i;
        }
    }
    best
}

/// Violated cutset inequalities at `point`.
///
/// Integral mode: each weakly connected component of the support graph
/// that misses the depot yields one pair of cuts. Fractional mode: for
/// every selected city a max-flow from the depot finds the minimum cut;
/// cuts short of `ŷ_i` yield a pair for the sink side.
pub fn separate_cutsets(am: &ActionModel, point: &[f64], integral: bool) -> Vec<LinearConstraint<f64>> {
    let k = am.locals.len();
    let mut found: Vec<Vec<bool>> = Vec::new();
    if integral {
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                p[a] = p[p[a]];
                a = p[a];
            }
            a
        }
        for i in 0..k {
            for j in 0..k {
                if let Some(v) = am.x(i, j) {
                    if point[v.0] > 0.5 {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let depot_root = find(&mut parent, 0);
        let mut roots: Vec<usize> = Vec::new();
        for i in 1..k {
            let r = find(&mut parent, i);
            if r != depot_root && point[am.y[i].0] > 0.5 && !roots.contains(&r) {
                roots.push(r);
            }
        }
        for r in roots {
            found.push((0..k).map(|i| find(&mut parent, i) == r).collect());
        }
    } else {
        let mut cap = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                if let Some(v) = am.x(i, j) {
                    cap[i * k + j] = point[v.0].max(0.0);
                }
            }
        }
        let mut covered = vec![false; k];
        for i in 1..k {
            let yi = point[am.y[i].0];
            if yi <= SEPARATION_TOL || covered[i] {
                continue;
            }
            let (flow, sink_side) = max_flow(&cap, k, 0, i);
            if flow < yi - SEPARATION_TOL {
                for (c, &s) in covered.iter_mut().zip(&sink_side) {
                    *c |= s;
                }
                if !found.contains(&sink_side) {
                    found.push(sink_side);
                }
            }
        }
    }
    let mut cuts = Vec::new();
    for set in found {
        let rep = representative(am, point, &set);
        for c in cutset_pair(am, &set, rep) {
            if c.violation(point) > SEPARATION_TOL {
                cuts.push(c);
            }
        }
    }
    cuts
}

/// Edmonds-Karp on a dense capacity matrix. Returns the flow value and the
/// nodes not reachable from `s` in the final residual graph.
pub fn max_flow(cap: &[f64], k: usize, s: usize, t: usize) -> (f64, Vec<bool>) {
    let mut res = cap.to_vec();
    let mut total = 0.0;
    let eps = 1e-12;
    loop {
        let mut prev = vec![usize::MAX; k];
        prev[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == t {
                break;
            }
            for v in 0..k {
                if prev[v] == usize::MAX && res[u * k + v] > eps {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            let sink_side = prev.iter().map(|&p| p == usize::MAX).collect();
            return (total, sink_side);
        }
        let mut aug = f64::INFINITY;
        let mut v = t;
        while v != s {
            let u = prev[v];
            aug = aug.min(res[u * k + v]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            res[u * k + v] -= aug;
            res[v * k + u] += aug;
            v = u;
        }
        total += aug;
    }
}

/// Most violated member of the exponential ReLU family for every big-M
/// unit, found in time linear in the unit's support:
/// include `i` in `I` iff `w_i t̂_i − w_i(1−ρ_i)(1−ẑ) < w_i ρ_i ẑ`, with
/// `ρ_i = [w_i ≥ 0]`.
pub fn separate_relu_cuts(am: &ActionModel, point: &[f64]) -> Vec<LinearConstraint<f64>> {
    let mut cuts = Vec::new();
    for nr in am.neurons.iter().filter(|n| n.encoding == Encoding::BigM) {
        let z = point[nr.z.0];
        let h = point[nr.h.0];
        // Row: h − Σ_I w_i t_i − κ z ≤ −Σ_I w_i(1−ρ_i)
        let mut row = vec![(nr.h, 1.0)];
        let mut kappa = nr.constant;
        let mut rhs = 0.0;
        let mut value = 0.0;
        for &(tv, w) in &nr.coeffs {
            let rho = if w >= 0.0 { 1.0 } else { 0.0 };
            let t = point[tv.0];
            let lhs = w * t - w * (1.0 - rho) * (1.0 - z);
            let alt = w * rho * z;
            if lhs < alt {
                row.push((tv, -w));
                kappa += w * (1.0 - rho);
                rhs -= w * (1.0 - rho);
                value += lhs;
            } else {
                kappa += w * rho;
                value += alt;
            }
        }
        value += nr.constant * z;
        if h > value + SEPARATION_TOL {
            row.push((nr.z, -kappa));
            cuts.push(LinearConstraint::new(row, Sense::Le, rhs));
        }
    }
    cuts
}
