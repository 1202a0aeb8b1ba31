//! States, routes, transitions and rollouts of the sequential CVRP model.

use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::CvrpInstance;
use crate::rng::Rng;

/// Bit `i` set iff city `i` is unvisited. The depot bit is always set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    n: usize,
    words: Vec<u64>,
}

impl State {
    /// All cities unvisited.
    pub fn start(n: usize) -> Self {
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if n % 64 != 0 {
            *words.last_mut().expect("n >= 1") = (1u64 << (n % 64)) - 1;
        }
        Self { n, words }
    }

    /// Only the depot left.
    pub fn terminal(n: usize) -> Self {
        Self::from_unvisited(n, std::iter::empty())
    }

    /// Depot plus the given customers.
    pub fn from_unvisited(n: usize, cities: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self {
            n,
            words: vec![0; n.div_ceil(64)],
        };
        s.set(0);
        for c in cities {
            assert!(c < n, "city {c} out of range for n={n}");
            s.set(c);
        }
        s
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_unvisited(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Unvisited customers in increasing order (depot excluded).
    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.n).filter(move |&i| self.is_unvisited(i))
    }

    pub fn num_unvisited(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum::<usize>() - 1
    }

    pub fn is_terminal(&self) -> bool {
        self.num_unvisited() == 0
    }

    /// Marks a customer visited. Panics on the depot.
    pub fn visit(&mut self, i: usize) {
        assert!(i != 0, "the depot is never visited");
        self.words[i / 64] &= !(1 << (i % 64));
    }

    /// Network input: 1.0 for unvisited (including the depot), else 0.0.
    pub fn features<T: num_traits::Float>(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| if self.is_unvisited(i) { T::one() } else { T::zero() })
            .collect()
    }

    /// Unvisited set as a big-endian hex integer, zero-padded to
    /// `ceil(n/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.n.div_ceil(4);
        (0..digits)
            .rev()
            .map(|d| {
                let mut v = 0u32;
                for b in 0..4 {
                    let i = d * 4 + b;
                    if i < self.n && self.is_unvisited(i) {
                        v |= 1 << b;
                    }
                }
                char::from_digit(v, 16).expect("nibble")
            })
            .collect()
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self, MdpError> {
        let bad = || MdpError::BadHex(hex.to_string());
        let mut s = Self {
            n,
            words: vec![0; n.div_ceil(64)],
        };
        for (d, ch) in hex.chars().rev().enumerate() {
            let v = ch.to_digit(16).ok_or_else(bad)?;
            for b in 0..4 {
                if v >> b & 1 == 1 {
                    let i = d * 4 + b;
                    if i >= n {
                        return Err(bad());
                    }
                    s.set(i);
                }
            }
        }
        if !s.is_unvisited(0) {
            return Err(bad());
        }
        Ok(s)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.unvisited()).finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("route covers no city")]
    Empty,
    #[error("route lists the depot as an interior city")]
    Depot,
    #[error("city {0} out of range")]
    OutOfRange(usize),
    #[error("city {0} appears twice")]
    Repeated(usize),
    #[error("load {load} exceeds capacity {capacity}")]
    OverCapacity { load: u64, capacity: u32 },
}

/// A depot-to-depot tour. Only constructible when feasible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Route {
    interior: Vec<usize>,
    cost: f64,
    load: u32,
}

impl Route {
    pub fn new(inst: &CvrpInstance, interior: Vec<usize>) -> Result<Self, RouteError> {
        if interior.is_empty() {
            return Err(RouteError::Empty);
        }
        let mut seen = vec![false; inst.n()];
        let mut load = 0u64;
        for &c in &interior {
            if c == 0 {
                return Err(RouteError::Depot);
            }
            if c >= inst.n() {
                return Err(RouteError::OutOfRange(c));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(RouteError::Repeated(c));
            }
            load += inst.demand(c) as u64;
        }
        if load > inst.capacity() as u64 {
            return Err(RouteError::OverCapacity {
                load,
                capacity: inst.capacity(),
            });
        }
        let cost = route_cost(inst, &interior);
        Ok(Self {
            interior,
            cost,
            load: load as u32,
        })
    }

    /// Interior cities in visiting order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Full sequence `0, c1, ..., ck, 0`.
    pub fn cities(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.interior.len() + 2);
        v.push(0);
        v.extend_from_slice(&self.interior);
        v.push(0);
        v
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn load(&self) -> u32 {
        self.load
    }
}

/// Σ of consecutive distances along `0, interior..., 0`.
pub fn route_cost(inst: &CvrpInstance, interior: &[usize]) -> f64 {
    let mut prev = 0;
    let mut c = 0.0;
    for &i in interior {
        c += inst.dist(prev, i);
        prev = i;
    }
    c + inst.dist(prev, 0)
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("route visits city {0}, which is already visited")]
    AlreadyVisited(usize),
    #[error("state width {got} does not match instance size {expected}")]
    Width { expected: usize, got: usize },
    #[error("rollout started from the terminal state")]
    TerminalStart,
    #[error("invalid state hex `{0}`")]
    BadHex(String),
    #[error("policy failed at state {state}: {source}")]
    Policy {
        state: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

pub fn transition(s: &State, a: &Route) -> Result<State, MdpError> {
    let mut next = s.clone();
    for &c in a.interior() {
        if c >= s.n() || !next.is_unvisited(c) {
            return Err(MdpError::AlreadyVisited(c));
        }
        next.visit(c);
    }
    Ok(next)
}

/// Draws customers uniformly without replacement into one route until the
/// next draw would exceed capacity; returns the remaining state and the
/// discarded route's cost.
pub fn random_start_state(inst: &CvrpInstance, rng: &mut Rng) -> (State, f64) {
    let mut order: Vec<usize> = (1..inst.n()).collect();
    order.shuffle(rng);
    let mut load = 0u32;
    let mut taken = Vec::new();
    for c in order {
        if load + inst.demand(c) > inst.capacity() {
            break;
        }
        load += inst.demand(c);
        taken.push(c);
    }
    let mut s = State::start(inst.n());
    for &c in &taken {
        s.visit(c);
    }
    (s, route_cost(inst, &taken))
}

/// Redraws terminal start states up to `max_draws` times. `None` when
/// every draw was terminal (e.g. all demand fits in one vehicle).
pub fn random_nonterminal_start(inst: &CvrpInstance, rng: &mut Rng, max_draws: usize) -> Option<State> {
    (0..max_draws)
        .map(|_| random_start_state(inst, rng).0)
        .find(|s| !s.is_terminal())
}

/// Anything that picks a route for a nonterminal state.
pub trait Policy {
    fn act(&mut self, s: &State) -> Result<Route, Box<dyn std::error::Error + Send + Sync>>;
}

impl<F> Policy for F
where
    F: FnMut(&State) -> Result<Route, Box<dyn std::error::Error + Send + Sync>>,
{
    fn act(&mut self, s: &State) -> Result<Route, Box<dyn std::error::Error + Send + Sync>> {
        self(s)
    }
}

/// A rollout: start state, then (route, next state) pairs down to the
/// terminal state.
#[derive(Clone, Debug)]
pub struct SamplePath {
    start: State,
    steps: Vec<(Route, State)>,
    /// `cumulative[t]` is the cost from state `t` onward; the last entry
    /// (terminal) is 0.
    cumulative: Vec<f64>,
}

impl SamplePath {
    pub fn start(&self) -> &State {
        &self.start
    }

    pub fn steps(&self) -> &[(Route, State)] {
        &self.steps
    }

    pub fn routes(&self) -> impl Iterator<Item = &Route> {
        self.steps.iter().map(|(r, _)| r)
    }

    pub fn total_cost(&self) -> f64 {
        self.cumulative[0]
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Every visited state, start and terminal included, with its
    /// cost-to-go.
    pub fn records(&self) -> impl Iterator<Item = (&State, f64)> {
        std::iter::once(&self.start)
            .chain(self.steps.iter().map(|(_, s)| s))
            .zip(self.cumulative.iter().copied())
    }
}

/// Applies `policy` from `s0` until the terminal state.
pub fn evaluate_policy_from_state<P: Policy + ?Sized>(
    inst: &CvrpInstance,
    policy: &mut P,
    s0: &State,
) -> Result<SamplePath, MdpError> {
    if s0.n() != inst.n() {
        return Err(MdpError::Width {
            expected: inst.n(),
            got: s0.n(),
        });
    }
    if s0.is_terminal() {
        return Err(MdpError::TerminalStart);
    }
    let mut s = s0.clone();
    let mut steps = Vec::new();
    while !s.is_terminal() {
        let a = policy.act(&s).map_err(|source| MdpError::Policy {
            state: s.to_hex(),
            source,
        })?;
        let next = transition(&s, &a)?;
        steps.push((a, next.clone()));
        s = next;
    }
    let mut cumulative = vec![0.0; steps.len() + 1];
    for t in (0..steps.len()).rev() {
        cumulative[t] = cumulative[t + 1] + steps[t].0.cost();
    }
    Ok(SamplePath {
        start: s0.clone(),
        steps,
        cumulative,
    })
}

/// One training record in the JSON-lines interchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub state: String,
    pub cost: f64,
    pub iteration: usize,
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[StateRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<StateRecord>, serde_json::Error> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(serde_json::Error::io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
