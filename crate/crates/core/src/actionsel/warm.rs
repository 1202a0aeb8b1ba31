//! 1-OPT local search with random restarts: toggle one city in or out of
//! the route while that lowers route distance plus tail value.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::bounds::TailAt;
use crate::instances::CvrpInstance;
use crate::mdp::{Route, State};
use crate::rng::Rng;
use crate::tsp;

#[derive(Clone, Debug)]
pub struct WarmStart {
    pub route: Route,
    pub objective: f64,
    /// Toggles applied across all restarts.
    pub moves: usize,
}

/// Route distances by city set.
#[derive(Default)]
pub struct TourCache {
    map: HashMap<Vec<usize>, (f64, Vec<usize>)>,
}

impl TourCache {
    pub fn tour(&mut self, inst: &CvrpInstance, cities: &[usize]) -> &(f64, Vec<usize>) {
        let mut key = cities.to_vec();
        key.sort_unstable();
        self.map.entry(key).or_insert_with_key(|k| tsp::tour(inst, k))
    }
}

fn objective(inst: &CvrpInstance, s: &State, tail: &TailAt<'_>, set: &[usize], cache: &mut TourCache) -> f64 {
    let cost = cache.tour(inst, set).0;
    let mut t = s.clone();
    for &c in set {
        t.visit(c);
    }
    cost + tail.value(&t)
}

pub fn warm_start(
    inst: &CvrpInstance,
    s: &State,
    tail: &TailAt<'_>,
    restarts: usize,
    max_passes: usize,
    rng: &mut Rng,
) -> WarmStart {
    let cities: Vec<usize> = s.unvisited().collect();
    assert!(!cities.is_empty(), "warm start from the terminal state");
    let mut cache = TourCache::default();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut moves = 0;
    for _ in 0..restarts.max(1) {
        let mut order = cities.clone();
        order.shuffle(rng);
        let mut set = Vec::new();
        let mut load = 0;
        for c in order {
            if load + inst.demand(c) > inst.capacity() {
                break;
            }
            load += inst.demand(c);
            set.push(c);
        }
        let mut cur = objective(inst, s, tail, &set, &mut cache);
        for _ in 0..max_passes {
            let mut step: Option<(f64, usize)> = None;
            for &c in &cities {
                let pos = set.iter().position(|&x| x == c);
                let cand: Vec<usize> = match pos {
                    Some(p) if set.len() > 1 => {
                        let mut v = set.clone();
                        v.remove(p);
                        v
                    }
                    Some(_) => continue,
                    None if load + inst.demand(c) <= inst.capacity() => {
                        let mut v = set.clone();
                        v.push(c);
                        v
                    }
                    None => continue,
                };
                let val = objective(inst, s, tail, &cand, &mut cache);
                if val < cur - 1e-12 && step.is_none_or(|(b, _)| val < b) {
                    step = Some((val, c));
                }
            }
            let Some((val, c)) = step else { break };
            match set.iter().position(|&x| x == c) {
                Some(p) => {
                    set.remove(p);
                    load -= inst.demand(c);
                }
                None => {
                    set.push(c);
                    load += inst.demand(c);
                }
            }
            cur = val;
            moves += 1;
        }
        if best.as_ref().is_none_or(|(b, _)| cur < *b) {
            best = Some((cur, set));
        }
    }
    let (objective, set) = best.expect("at least one restart");
    let order = cache.tour(inst, &set).1.clone();
    let route = Route::new(inst, order).expect("toggles keep the route feasible");
    WarmStart {
        route,
        objective,
        moves,
    }
}
