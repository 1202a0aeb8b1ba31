#![allow(dead_code)]

use cvrp_core::instances::{generate_random, CvrpInstance};
use cvrp_core::{State, ValueNet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Network with weights large enough to matter against unit-square
/// distances.
pub fn random_net(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> ValueNet {
    let w = (0..hidden)
        .map(|_| (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let b = (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let w_out = (0..hidden).map(|_| rng.gen_range(-1.5..1.5)).collect();
    ValueNet::from_parts(inputs, w, b, w_out, rng.gen_range(0.0..3.0)).unwrap()
}

/// State with exactly `m` unvisited customers.
pub fn random_state(n: usize, m: usize, rng: &mut ChaCha8Rng) -> State {
    let mut c: Vec<usize> = (1..n).collect();
    c.shuffle(rng);
    State::from_unvisited(n, c[..m].iter().copied())
}

pub fn instance(n: usize, seed: u64) -> CvrpInstance {
    generate_random(n, seed).unwrap()
}
