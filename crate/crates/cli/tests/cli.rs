use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvrp_core::oracle::exact_cvrp;
use cvrp_core::CvrpInstance;
use serde_json::Value;

fn cvrp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvrp"))
        .args(args)
        .current_dir(dir)
        .env_remove("CVRP_WIDTH")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = cvrp(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn instances(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .collect();
    v.sort();
    v
}

/// Data rows of a versioned CSV, split on commas.
fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "11", "--count", "3", "--seed", "7", "--out", "a"], d.path());
    ok(&["generate", "--n", "11", "--count", "3", "--seed", "7", "--out", "b"], d.path());
    let a = instances(&d.path().join("a"));
    assert_eq!(a.len(), 3);
    for p in &a {
        let q = d.path().join("b").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
    let m = json(d.path().join("a/manifest.json"));
    assert_eq!(m["instances"].as_array().unwrap().len(), 3);
    assert_eq!(m["seed"], 7);
}

#[test]
fn generate_capacity_and_empty_suite() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "51", "--count", "2", "--out", "big"], d.path());
    for p in instances(&d.path().join("big")) {
        assert_eq!(CvrpInstance::load(&p).unwrap().capacity(), 40);
    }
    ok(&["generate", "--n", "11", "--count", "0", "--out", "none"], d.path());
    let m = json(d.path().join("none/manifest.json"));
    assert!(m["instances"].as_array().unwrap().is_empty());
}

#[test]
fn solve_manifest_echoes_resolved_defaults() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "6", "--count", "1", "--out", "i"], d.path());
    ok(&["solve", "i/inst-0000.json", "--out", "r", "--dry-run"], d.path());
    let c = &json(d.path().join("r/manifest.json"))["config"];
    assert_eq!((c["iterations"].as_u64(), c["paths"].as_u64()), (Some(250), Some(10)));
    assert_eq!(c["gamma"].as_f64(), Some(1.0));
    assert_eq!(c["train"]["hidden"].as_u64(), Some(16));

    ok(
        &["solve", "i/inst-0000.json", "--out", "h", "--dry-run", "--mode", "high-parallelism"],
        d.path(),
    );
    let c = &json(d.path().join("h/manifest.json"))["config"];
    assert_eq!((c["iterations"].as_u64(), c["paths"].as_u64()), (Some(100), Some(200)));
}

#[test]
fn width_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "6", "--count", "1", "--out", "i"], d.path());
    let out = Command::new(env!("CARGO_BIN_EXE_cvrp"))
        .args(["solve", "i/inst-0000.json", "--out", "r", "--dry-run"])
        .current_dir(d.path())
        .env("CVRP_WIDTH", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(d.path().join("r/manifest.json"))["config"]["width"], 3);
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "6", "--count", "1", "--out", "i"], d.path());
    std::fs::write(d.path().join("bad.json"), r#"{"iterations": 1, "gama": 0.5}"#).unwrap();
    let out = cvrp(&["solve", "i/inst-0000.json", "--config", "bad.json", "--out", "r"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));

    let out = cvrp(&["solve", "i/inst-0000.json", "--out", "r", "--gamma", "2"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cvrp(&["solve", "--out", "r"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cvrp(&["solve", "missing.json", "--out", "r"], d.path());
    assert_eq!(out.status.code(), Some(1));

    ok(&["generate", "--n", "16", "--count", "1", "--out", "big"], d.path());
    let out = cvrp(&["baseline", "oracle", "big/inst-0000.json"], d.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baselines_match_the_oracle_and_bound_each_other() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "9", "--count", "4", "--seed", "3", "--out", "i"], d.path());
    let stdout = ok(&["baseline", "oracle", "i", "--out", "oracle.csv"], d.path());
    assert!(stdout.contains('±'));
    ok(&["baseline", "greedy", "i", "--out", "greedy.csv"], d.path());
    let oracle = csv_rows(d.path().join("oracle.csv"));
    let greedy = csv_rows(d.path().join("greedy.csv"));
    assert_eq!(oracle.len(), 4);
    let files = instances(&d.path().join("i"));
    for ((o, g), f) in oracle.iter().zip(&greedy).zip(&files) {
        assert_eq!(o[0], g[0]);
        let inst = CvrpInstance::load(f).unwrap();
        assert_eq!(o[0], inst.name().unwrap());
        let exact: f64 = o[2].parse().unwrap();
        assert_eq!(exact, exact_cvrp(&inst).unwrap().0);
        assert!(g[2].parse::<f64>().unwrap() >= exact - 1e-9);
    }
    let text = std::fs::read_to_string(d.path().join("oracle.csv")).unwrap();
    assert!(text.starts_with("# schema: cvrp-baseline v1"));
    assert!(text.contains("# cost: count=4 mean="));
    assert!(d.path().join("greedy.manifest.json").exists());
}

#[test]
fn report_joins_runs_with_references() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "7", "--count", "2", "--seed", "5", "--out", "i"], d.path());
    ok(&["baseline", "greedy", "i", "--out", "greedy.csv"], d.path());
    ok(&["baseline", "oracle", "i", "--out", "oracle.csv"], d.path());
    for k in 0..2 {
        let inst = format!("i/inst-000{k}.json");
        let out = format!("runs/{k}");
        ok(
            &[
                "solve", &inst, "--out", &out, "--iterations", "2", "--paths", "3", "--hidden", "4", "--epochs", "20",
            ],
            d.path(),
        );
    }

    // Row 0 is the greedy policy with the same seed, so its gap to the
    // greedy baseline is zero.
    ok(&["report", "runs/0", "runs/1", "--reference", "greedy.csv", "--out", "vs-greedy"], d.path());
    let curves = csv_rows(d.path().join("vs-greedy/curves.csv"));
    assert_eq!(curves[0][2].parse::<f64>().unwrap(), 0.0);

    ok(&["report", "runs/0", "runs/1", "--reference", "oracle.csv", "--out", "vs-opt"], d.path());
    let rows = csv_rows(d.path().join("vs-opt/report.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() >= -1e-12);
        assert!(r[5].parse::<f64>().unwrap() <= r[4].parse::<f64>().unwrap());
    }
    let curves = csv_rows(d.path().join("vs-opt/curves.csv"));
    assert_eq!(curves.len(), 3);
    let best: Vec<f64> = curves.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));

    // Combining references keeps the better cost per instance.
    ok(
        &["report", "runs/0", "runs/1", "--reference", "greedy.csv", "--reference", "oracle.csv", "--out", "both"],
        d.path(),
    );
    assert_eq!(
        std::fs::read(d.path().join("both/report.csv")).unwrap(),
        std::fs::read(d.path().join("vs-opt/report.csv")).unwrap()
    );

    let out = cvrp(&["report", "runs/0", "--reference", "oracle.csv"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatched instance sets"));

    let curve = d.path().join("runs/1/curve.csv");
    let text = std::fs::read_to_string(&curve).unwrap().replacen("v1", "v9", 1);
    std::fs::write(&curve, text).unwrap();
    let out = cvrp(&["report", "runs/0", "runs/1", "--reference", "oracle.csv"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn resumed_solve_matches_a_direct_one() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--n", "7", "--count", "1", "--seed", "9", "--out", "i"], d.path());
    let common = ["--paths", "3", "--hidden", "4", "--epochs", "20", "--seed", "4"];
    let solve = |out: &str, iters: &str, ck: Option<&str>| {
        let mut args = vec!["solve", "i/inst-0000.json", "--out", out, "--iterations", iters];
        args.extend(common);
        if let Some(c) = ck {
            args.extend(["--checkpoint", c]);
        }
        ok(&args, d.path());
    };
    solve("direct", "2", None);
    solve("part", "1", Some("ck.json"));
    solve("resumed", "2", Some("ck.json"));
    let a = json(d.path().join("direct/solution.json"));
    let b = json(d.path().join("resumed/solution.json"));
    assert_eq!(a["last"], b["last"]);
    assert_eq!(a["best"], b["best"]);
    let costs = |v: &Value| {
        v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["cost"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(costs(&a), costs(&b));
}
