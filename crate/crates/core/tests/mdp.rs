mod common;

use std::io::Cursor;

use common::{instance, rng};
use cvrp_core::actionsel::{ActionConfig, MilpPolicy, Tail};
use cvrp_core::instances::CvrpInstance;
use cvrp_core::mdp::{
    evaluate_policy_from_state, random_start_state, read_jsonl, route_cost, transition, write_jsonl, StateRecord,
};
use cvrp_core::{Route, State};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn unit_demand_instance(n: usize, demand: u32, capacity: u32) -> CvrpInstance {
    let base = instance(n, 1);
    let mut d = vec![demand; n];
    d[0] = 0;
    CvrpInstance::from_coords(
        base.coords().unwrap().to_vec(),
        cvrp_core::instances::DistanceRule::Exact,
        d,
        capacity,
    )
    .unwrap()
}

#[test]
fn first_removed_city_is_uniform() {
    // Demand equal to capacity removes exactly the first drawn city.
    let n = 11;
    let inst = unit_demand_instance(n, 5, 5);
    let mut r = rng(17);
    let draws = 10_000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        let (s, _) = random_start_state(&inst, &mut r);
        assert_eq!(s.num_unvisited(), n - 2);
        let gone = (1..n).find(|&c| !s.is_unvisited(c)).unwrap();
        counts[gone] += 1;
    }
    let expected = draws as f64 / (n - 1) as f64;
    let stat: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((n - 2) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
}

#[test]
fn start_state_cost_is_the_discarded_route() {
    let inst = instance(11, 4);
    let mut r = rng(3);
    for _ in 0..50 {
        let mut r2 = r.clone();
        let (s, cost) = random_start_state(&inst, &mut r);
        // Replay the draw order.
        let mut order: Vec<usize> = (1..11).collect();
        order.shuffle(&mut r2);
        let mut load = 0;
        let taken: Vec<usize> = order
            .into_iter()
            .take_while(|&c| {
                load += inst.demand(c);
                load <= inst.capacity()
            })
            .collect();
        assert_eq!(cost, route_cost(&inst, &taken));
        assert!(taken.iter().all(|&c| !s.is_unvisited(c)));
        assert_eq!(s.num_unvisited(), 10 - taken.len());
    }
}

#[test]
fn tiny_demands_can_empty_the_state() {
    let inst = unit_demand_instance(6, 1, 6);
    let (s, _) = random_start_state(&inst, &mut rng(0));
    assert!(s.is_terminal());
}

/// Second implementation of the route cost: walk the closed cycle.
fn cycle_cost(inst: &CvrpInstance, interior: &[usize]) -> f64 {
    let mut cyc = vec![0];
    cyc.extend_from_slice(interior);
    cyc.push(0);
    cyc.iter().zip(cyc.iter().skip(1)).map(|(&a, &b)| inst.dist(a, b)).sum()
}

#[test]
fn route_cost_matches_resummation() {
    let inst = instance(11, 9);
    let mut r = rng(5);
    for _ in 0..200 {
        let mut c: Vec<usize> = (1..11).collect();
        c.shuffle(&mut r);
        let k = r.gen_range(1..=4);
        let interior = c[..k].to_vec();
        let want = cycle_cost(&inst, &interior);
        assert!((route_cost(&inst, &interior) - want).abs() < 1e-12);
        if let Ok(route) = Route::new(&inst, interior) {
            assert!((route.cost() - want).abs() < 1e-12);
        }
    }
}

#[test]
fn routes_are_validated() {
    let inst = unit_demand_instance(5, 3, 6);
    assert!(Route::new(&inst, vec![]).is_err());
    assert!(Route::new(&inst, vec![1, 1]).is_err());
    assert!(Route::new(&inst, vec![0, 1]).is_err());
    assert!(Route::new(&inst, vec![1, 2, 3]).is_err());
    assert!(Route::new(&inst, vec![9]).is_err());
    assert_eq!(Route::new(&inst, vec![2, 4]).unwrap().load(), 6);
}

#[test]
fn transition_examples() {
    let inst = unit_demand_instance(4, 1, 3);
    let s = State::start(4);
    let t = transition(&s, &Route::new(&inst, vec![1, 2]).unwrap()).unwrap();
    assert_eq!(t.unvisited().collect::<Vec<_>>(), vec![3]);
    let done = transition(&t, &Route::new(&inst, vec![3]).unwrap()).unwrap();
    assert!(done.is_terminal());
    assert!(transition(&t, &Route::new(&inst, vec![2]).unwrap()).is_err());
}

#[test]
fn greedy_rollout_replays_to_its_total() {
    let inst = instance(11, 42);
    let cfg = ActionConfig::default();
    let mut pol = MilpPolicy::new(&inst, &Tail::Greedy, &cfg, rng(1));
    let s0 = State::start(11);
    let path = evaluate_policy_from_state(&inst, &mut pol, &s0).unwrap();
    let replay: f64 = path.routes().map(|r| cycle_cost(&inst, r.interior())).sum();
    assert!((path.total_cost() - replay).abs() < 1e-9);
    assert!(path.steps().len() <= 10);
    assert!(path.steps().last().unwrap().1.is_terminal());
    // The routes partition the customers.
    let mut seen: Vec<usize> = path.routes().flat_map(|r| r.interior().to_vec()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (1..11).collect::<Vec<_>>());
    // Cumulative costs step down by exactly each route's cost.
    let c = path.cumulative();
    for (t, r) in path.routes().enumerate() {
        assert!((c[t] - c[t + 1] - r.cost()).abs() < 1e-12);
    }
    assert_eq!(*c.last().unwrap(), 0.0);
}

#[test]
fn terminal_start_is_rejected() {
    let inst = instance(5, 1);
    let cfg = ActionConfig::default();
    let mut pol = MilpPolicy::new(&inst, &Tail::Greedy, &cfg, rng(1));
    assert!(evaluate_policy_from_state(&inst, &mut pol, &State::terminal(5)).is_err());
}

#[test]
fn infeasible_policy_output_aborts() {
    let inst = instance(5, 1);
    let mut bad = |_: &State| -> Result<Route, Box<dyn std::error::Error + Send + Sync>> {
        Ok(Route::new(&instance(5, 1), vec![1]).unwrap())
    };
    let s = State::from_unvisited(5, [2, 3]);
    assert!(evaluate_policy_from_state(&inst, &mut bad, &s).is_err());
}

#[test]
fn jsonl_round_trip() {
    let recs = vec![
        StateRecord {
            state: State::start(9).to_hex(),
            cost: 4.25,
            iteration: 0,
        },
        StateRecord {
            state: State::from_unvisited(9, [3, 8]).to_hex(),
            cost: 0.1 + 0.2,
            iteration: 3,
        },
    ];
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &recs).unwrap();
    assert_eq!(read_jsonl(Cursor::new(buf)).unwrap(), recs);
    assert_eq!(State::from_hex(9, &recs[1].state).unwrap(), State::from_unvisited(9, [3, 8]));
}

proptest! {
    #[test]
    fn hex_round_trip(n in 1usize..200, bits in proptest::collection::vec(any::<bool>(), 200)) {
        let s = State::from_unvisited(n, (1..n).filter(|&i| bits[i]));
        prop_assert_eq!(State::from_hex(n, &s.to_hex()).unwrap(), s);
    }

    #[test]
    fn transition_shrinks_the_state(seed in any::<u64>(), k in 1usize..4) {
        let inst = instance(9, 2);
        let mut r = rng(seed);
        let mut c: Vec<usize> = (1..9).collect();
        c.shuffle(&mut r);
        if let Ok(route) = Route::new(&inst, c[..k].to_vec()) {
            let s = State::start(9);
            let t = transition(&s, &route).unwrap();
            prop_assert_eq!(t.num_unvisited(), s.num_unvisited() - k);
            prop_assert!(t.unvisited().all(|i| s.is_unvisited(i)));
        }
    }
}
