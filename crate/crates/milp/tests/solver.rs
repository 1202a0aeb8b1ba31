mod support;

use cvrp_milp::{lp_solve, solve, LinearConstraint, LpStatus, Model, Sense, SolveStatus, VarId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::rational_lp::{self, q, RationalLp, RowSense};

fn sense_of(k: u32) -> (Sense, RowSense) {
    match k % 3 {
        0 => (Sense::Le, RowSense::Le),
        1 => (Sense::Ge, RowSense::Ge),
        _ => (Sense::Eq, RowSense::Eq),
    }
}

/// Random bounded LP with small integer data, built for both solvers.
fn random_lp(rng: &mut ChaCha8Rng) -> (Model<f64>, RationalLp) {
    let n = rng.gen_range(2..=7);
    let m = rng.gen_range(1..=6);
    let mut model = Model::new();
    let mut lp = RationalLp {
        cost: Vec::new(),
        rows: Vec::new(),
        lb: Vec::new(),
        ub: Vec::new(),
    };
    let mut vars = Vec::new();
    for j in 0..n {
        let lo = rng.gen_range(-3..=1);
        let hi = lo + rng.gen_range(0..=5);
        vars.push(model.add_continuous(format!("x{j}"), lo as f64, hi as f64).unwrap());
        let c = rng.gen_range(-5..=5);
        model.set_objective_coeff(vars[j], c as f64);
        lp.cost.push(q(c));
        lp.lb.push(q(lo));
        lp.ub.push(q(hi));
    }
    for _ in 0..m {
        let coeffs: Vec<i64> = (0..n).map(|_| rng.gen_range(-4..=4)).collect();
        let rhs = rng.gen_range(-6..=8);
        // Equalities make random LPs infeasible too often.
        let (s, rs) = sense_of(rng.gen_range(0..5u32).min(1));
        model
            .add_constraint(LinearConstraint::new(
                vars.iter().zip(&coeffs).map(|(&v, &a)| (v, a as f64)).collect(),
                s,
                rhs as f64,
            ))
            .unwrap();
        lp.rows.push((coeffs.iter().map(|&a| q(a)).collect(), rs, q(rhs)));
    }
    (model, lp)
}

#[test]
fn lp_matches_exact_rational_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut feasible = 0;
    for _ in 0..300 {
        let (model, exact) = random_lp(&mut rng);
        let ours = lp_solve(&model, None).unwrap();
        match rational_lp::solve(&exact) {
            None => assert_eq!(ours.status, LpStatus::Infeasible),
            Some(v) => {
                feasible += 1;
                assert_eq!(ours.status, LpStatus::Optimal);
                let v = rational_lp::to_f64(&v);
                assert!((ours.objective - v).abs() < 1e-7 * (1.0 + v.abs()), "{} vs {}", ours.objective, v);
                assert!(model.max_violation(&ours.x) < 1e-7);
            }
        }
    }
    assert!(feasible > 100, "too few feasible samples: {feasible}");
}

fn enumerate_binary(model: &Model<f64>) -> Option<f64> {
    let n = model.num_vars();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if model.max_violation(&x) <= 1e-9 {
            let v = model.objective_value(&x);
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    }
    best
}

#[test]
fn ten_item_knapsack_matches_enumeration() {
    let weights = [23.0, 31.0, 29.0, 44.0, 53.0, 38.0, 63.0, 85.0, 89.0, 82.0];
    let values = [92.0, 57.0, 49.0, 68.0, 60.0, 43.0, 67.0, 84.0, 87.0, 72.0];
    let mut m = Model::new();
    let xs: Vec<VarId> = (0..10).map(|i| m.add_binary(format!("x{i}"))).collect();
    for (&x, &v) in xs.iter().zip(&values) {
        m.set_objective_coeff(x, -v);
    }
    m.add_constraint(LinearConstraint::new(
        xs.iter().zip(&weights).map(|(&x, &w)| (x, w)).collect(),
        Sense::Le,
        165.0,
    ))
    .unwrap();
    let r = solve(&m);
    assert!(r.is_optimal());
    assert_eq!(r.objective, enumerate_binary(&m));
    assert_eq!(r.objective, Some(-309.0));
}

fn binary_program(seed: u64, n: usize, rows: usize) -> Model<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Model::new();
    let xs: Vec<VarId> = (0..n).map(|i| m.add_binary(format!("b{i}"))).collect();
    for &x in &xs {
        m.set_objective_coeff(x, rng.gen_range(-10..=10) as f64);
    }
    for _ in 0..rows {
        let mut coeffs: Vec<(VarId, f64)> = Vec::new();
        for &x in &xs {
            if rng.gen_bool(0.6) {
                coeffs.push((x, rng.gen_range(-6..=9) as f64));
            }
        }
        let rhs = rng.gen_range(-2..=(3 * n as i64)) as f64;
        let sense = if rng.gen_bool(0.8) { Sense::Le } else { Sense::Ge };
        m.add_constraint(LinearConstraint::new(coeffs, sense, rhs)).unwrap();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_bound_equals_enumeration(seed in any::<u64>(), n in 1usize..=15, rows in 1usize..=6) {
        let m = binary_program(seed, n, rows);
        let r = solve(&m);
        let expect = enumerate_binary(&m);
        match expect {
            None => prop_assert_eq!(r.status, SolveStatus::Infeasible),
            Some(v) => {
                prop_assert!(r.is_optimal());
                prop_assert_eq!(r.objective, Some(v));
            }
        }
    }

    #[test]
    fn bounds_are_monotone(seed in any::<u64>()) {
        let m = binary_program(seed, 14, 4);
        let r = solve(&m);
        for w in r.progress.windows(2) {
            prop_assert!(w[1].dual_bound >= w[0].dual_bound);
            if let (Some(a), Some(b)) = (w[0].incumbent, w[1].incumbent) {
                prop_assert!(b <= a);
            }
        }
        if let Some(obj) = r.objective {
            prop_assert!(obj >= r.dual_bound - 1e-9);
        }
    }
}

#[test]
fn mixed_program_matches_enumeration_over_binaries() {
    // Binary enumeration, continuous part solved exactly per assignment.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let nb = 4;
        let nc = 3;
        let mut m = Model::new();
        let bs: Vec<VarId> = (0..nb).map(|i| m.add_binary(format!("z{i}"))).collect();
        let cs: Vec<VarId> = (0..nc)
            .map(|i| m.add_continuous(format!("y{i}"), 0.0, 4.0).unwrap())
            .collect();
        let all: Vec<VarId> = bs.iter().chain(&cs).copied().collect();
        let cost: Vec<i64> = (0..nb + nc).map(|_| rng.gen_range(-5..=5)).collect();
        for (&v, &c) in all.iter().zip(&cost) {
            m.set_objective_coeff(v, c as f64);
        }
        let mut rows = Vec::new();
        for _ in 0..4 {
            let a: Vec<i64> = (0..nb + nc).map(|_| rng.gen_range(-3..=3)).collect();
            let b = rng.gen_range(-2..=6);
            m.add_constraint(LinearConstraint::new(
                all.iter().zip(&a).map(|(&v, &x)| (v, x as f64)).collect(),
                Sense::Le,
                b as f64,
            ))
            .unwrap();
            rows.push((a, b));
        }
        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << nb) {
            let fixed: Vec<i64> = (0..nb).map(|j| ((mask >> j) & 1) as i64).collect();
            let lp = RationalLp {
                cost: cost.iter().map(|&c| q(c)).collect(),
                rows: rows
                    .iter()
                    .map(|(a, b)| (a.iter().map(|&x| q(x)).collect(), RowSense::Le, q(*b)))
                    .collect(),
                lb: fixed.iter().map(|&f| q(f)).chain((0..nc).map(|_| q(0))).collect(),
                ub: fixed.iter().map(|&f| q(f)).chain((0..nc).map(|_| q(4))).collect(),
            };
            if let Some(v) = rational_lp::solve(&lp) {
                let v = rational_lp::to_f64(&v);
                if best.is_none_or(|b| v < b) {
                    best = Some(v);
                }
            }
        }
        let r = solve(&m);
        match best {
            None => assert_eq!(r.status, SolveStatus::Infeasible),
            Some(v) => {
                assert!(r.is_optimal());
                assert!((r.objective.unwrap() - v).abs() < 1e-6, "{:?} vs {v}", r.objective);
            }
        }
    }
}
