use std::path::Path;

use cvrp_core::instances::{
    generate_random, parse_cvrplib, random_capacity, read_cvrplib, scale_distances, CvrpInstance, DistanceRule,
    ParseErrorKind,
};
use proptest::prelude::*;

fn fixture() -> CvrpInstance {
    read_cvrplib(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/A-n32-k5.vrp")).unwrap()
}

#[test]
fn random_instances_follow_the_generation_rules() {
    for (n, q) in [(11, 20), (21, 30), (51, 40)] {
        for seed in 0..5 {
            let inst = generate_random(n, seed).unwrap();
            assert_eq!(inst.n(), n);
            assert_eq!(inst.capacity(), q);
            assert_eq!(inst.demand(0), 0);
            assert!((1..n).all(|i| (1..=9).contains(&inst.demand(i))));
            let xy = inst.coords().unwrap();
            assert!(xy.iter().flatten().all(|&c| (0.0..1.0).contains(&c)));
            for i in 0..n {
                for j in 0..n {
                    let d = (xy[i][0] - xy[j][0]).hypot(xy[i][1] - xy[j][1]);
                    assert_eq!(inst.dist(i, j), d);
                }
            }
            assert!(inst.is_metric());
        }
    }
}

#[test]
fn capacity_brackets_by_size() {
    assert_eq!(random_capacity(2), 20);
    assert_eq!(random_capacity(11), 20);
    assert_eq!(random_capacity(12), 30);
    assert_eq!(random_capacity(21), 30);
    assert_eq!(random_capacity(22), 40);
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    assert_eq!(generate_random(11, 7).unwrap().to_json(), generate_random(11, 7).unwrap().to_json());
    assert_ne!(generate_random(11, 7).unwrap().to_json(), generate_random(11, 8).unwrap().to_json());
}

#[test]
fn demand_mean_is_five() {
    let (mut sum, mut count) = (0u64, 0u64);
    for seed in 0..200 {
        let inst = generate_random(21, seed).unwrap();
        sum += inst.total_demand();
        count += 20;
    }
    let mean = sum as f64 / count as f64;
    // sd of one draw is sqrt(20/3); 4000 draws give a standard error of 0.04.
    assert!((mean - 5.0).abs() < 0.2, "{mean}");
}

#[test]
fn json_round_trip_and_strictness() {
    let inst = generate_random(9, 3).unwrap().with_name("r9");
    let back = CvrpInstance::from_json(&inst.to_json()).unwrap();
    assert_eq!(back.to_json(), inst.to_json());
    let mut v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
    v["colour"] = "red".into();
    assert!(CvrpInstance::from_json(&v.to_string()).is_err());
    // Distances are rebuilt from coordinates when omitted.
    v.as_object_mut().unwrap().remove("colour");
    v.as_object_mut().unwrap().remove("dist");
    let rebuilt = CvrpInstance::from_json(&v.to_string()).unwrap();
    assert_eq!(rebuilt.dist(2, 5), inst.dist(2, 5));
}

#[test]
fn json_with_false_metric_claim_is_rejected() {
    let inst = CvrpInstance::from_matrix(
        vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]],
        vec![0, 1, 1],
        5,
    )
    .unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
    v["metric"] = true.into();
    assert!(CvrpInstance::from_json(&v.to_string()).is_err());
}

#[test]
fn cvrplib_fixture_loads() {
    let inst = fixture();
    assert_eq!(inst.n(), 32);
    assert_eq!(inst.capacity(), 100);
    assert_eq!(inst.total_demand(), 410);
    assert_eq!(inst.demand(0), 0);
    assert_eq!(inst.distance_rule(), DistanceRule::Nint);
    let xy = inst.coords().unwrap();
    assert_eq!(xy[0], [82.0, 76.0]);
    let d = ((xy[0][0] - xy[1][0]).powi(2) + (xy[0][1] - xy[1][1]).powi(2)).sqrt();
    assert_eq!(inst.dist(0, 1), d.round());
}

#[test]
fn cvrplib_depot_is_moved_to_front() {
    let text = "NAME : t\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\n\
                NODE_COORD_SECTION\n1 0 0\n2 3 4\n3 6 8\nDEMAND_SECTION\n1 2\n2 0\n3 5\n\
                DEPOT_SECTION\n2\n-1\nEOF\n";
    let inst = parse_cvrplib(text).unwrap();
    assert_eq!(inst.demands(), &[0, 2, 5]);
    assert_eq!(inst.coords().unwrap()[0], [3.0, 4.0]);
    assert_eq!(inst.dist(0, 1), 5.0);
    assert_eq!(inst.dist(1, 2), 10.0);
}

#[test]
fn cvrplib_errors_carry_line_numbers() {
    let text = "NAME : t\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : GEO\nCAPACITY : 10\n";
    let e = parse_cvrplib(text).unwrap_err();
    assert_eq!(e.line, 4);
    assert!(matches!(e.kind, ParseErrorKind::UnknownEdgeWeightType(_)));

    let text = "DIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\nNODE_COORD_SECTION\n1 0 x\n";
    let e = parse_cvrplib(text).unwrap_err();
    assert_eq!(e.line, 5);
    assert!(matches!(e.kind, ParseErrorKind::MalformedNumber(_)));
}

#[test]
fn scaling_multiplies_and_rounds() {
    let inst = fixture();
    let s = scale_distances(&inst, 10).unwrap();
    for i in 0..inst.n() {
        for j in 0..inst.n() {
            assert_eq!(s.dist(i, j), (10.0 * inst.dist(i, j)).round());
        }
    }
    assert!(scale_distances(&inst, 0).is_err());
}

proptest! {
    #[test]
    fn generated_instances_are_servable(n in 2usize..60, seed in any::<u64>()) {
        let inst = generate_random(n, seed).unwrap();
        prop_assert!((1..n).all(|i| inst.demand(i) <= inst.capacity()));
        prop_assert!((0..n).all(|i| inst.dist(i, i) == 0.0));
        prop_assert!((0..n).all(|i| (0..n).all(|j| inst.dist(i, j) == inst.dist(j, i))));
    }
}
