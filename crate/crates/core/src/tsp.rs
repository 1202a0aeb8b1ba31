//! Tours through the depot and a set of customers.

use crate::instances::CvrpInstance;
use crate::mdp::route_cost;

/// Largest customer count [`held_karp`] accepts.
pub const HELD_KARP_MAX: usize = 16;

/// Exact shortest tour `0 → cities → 0` by subset dynamic programming.
/// Returns the cost and the visiting order. Works on directed distances.
pub fn held_karp(inst: &CvrpInstance, cities: &[usize]) -> (f64, Vec<usize>) {
    let k = cities.len();
    assert!(k <= HELD_KARP_MAX, "held_karp: {k} cities exceeds {HELD_KARP_MAX}");
    match k {
        0 => return (0.0, Vec::new()),
        1 => return (route_cost(inst, cities), cities.to_vec()),
        _ => {}
    }
    let full = 1usize << k;
    // dp[mask * k + last]: cheapest path from the depot through `mask`
    // ending at `last`.
    let mut dp = vec![f64::INFINITY; full * k];
    let mut parent = vec![u8::MAX; full * k];
    for (j, &c) in cities.iter().enumerate() {
        dp[(1 << j) * k + j] = inst.dist(0, c);
    }
    for mask in 1..full {
        for last in 0..k {
            if mask >> last & 1 == 0 {
                continue;
            }
            let cur = dp[mask * k + last];
            if !cur.is_finite() {
                continue;
            }
            let row = inst.dist_row(cities[last]);
            for (nxt, &c) in cities.iter().enumerate() {
                if mask >> nxt & 1 == 1 {
                    continue;
                }
                let m2 = mask | 1 << nxt;
                let cand = cur + row[c];
                let slot = m2 * k + nxt;
                if cand < dp[slot] {
                    dp[slot] = cand;
                    parent[slot] = last as u8;
                }
            }
        }
    }
    let mask = full - 1;
    let (mut best, mut last) = (f64::INFINITY, 0);
    for (j, &c) in cities.iter().enumerate() {
        let cand = dp[mask * k + j] + inst.dist(c, 0);
        if cand < best {
            best = cand;
            last = j;
        }
    }
    let mut order = Vec::with_capacity(k);
    let mut m = mask;
    loop {
        order.push(cities[last]);
        let p = parent[m * k + last];
        m &= !(1 << last);
        if p == u8::MAX {
            break;
        }
        last = p as usize;
    }
    order.reverse();
    (best, order)
}

/// Nearest-neighbor construction followed by 2-opt until no improving
/// reversal exists. Costs are recomputed in full, so asymmetric matrices
/// are handled correctly.
pub fn nearest_neighbor_two_opt(inst: &CvrpInstance, cities: &[usize]) -> (f64, Vec<usize>) {
    let mut left: Vec<usize> = cities.to_vec();
    let mut order = Vec::with_capacity(left.len());
    let mut cur = 0;
    while !left.is_empty() {
        let (pos, _) = left
            .iter()
            .enumerate()
            .min_by(|a, b| inst.dist(cur, *a.1).total_cmp(&inst.dist(cur, *b.1)))
            .expect("nonempty");
        cur = left.remove(pos);
        order.push(cur);
    }
    let mut best = route_cost(inst, &order);
    let k = order.len();
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..k {
            for j in i + 1..k {
                order[i..=j].reverse();
                let c = route_cost(inst, &order);
                if c < best - 1e-12 {
                    best = c;
                    improved = true;
                } else {
                    order[i..=j].reverse();
                }
            }
        }
    }
    (best, order)
}

/// Exact below 13 customers, heuristic above.
pub fn tour(inst: &CvrpInstance, cities: &[usize]) -> (f64, Vec<usize>) {
    if cities.len() <= 12 {
        held_karp(inst, cities)
    } else {
        nearest_neighbor_two_opt(inst, cities)
    }
}
