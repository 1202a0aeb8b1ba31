use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use cvrp_core::instances::generate_random;
use cvrp_core::oracle::exact_cvrp;
use cvrp_core::policy::{gap, read_csv, run, run_with, RunConfig, RunReport};
use cvrp_core::rng::derive_seed;
use serde_json::json;

use crate::overrides::Overrides;
use crate::tables::{
    instance_key, list_instances, load_instance, read_baseline, write_baseline, write_curves, write_report,
    BaselineRow, CurveRow, ReportRow, Summary,
};
use crate::{Baseline, CliError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn domain(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Domain(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(domain(path))
}

fn write_manifest(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn generate(n: usize, count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(domain(out))?;
    let mut listed = Vec::with_capacity(count);
    for i in 0..count {
        let s = derive_seed(seed, &[i as u64]);
        let inst = generate_random(n, s).map_err(|e| CliError::Usage(e.to_string()))?;
        let file = format!("inst-{i:04}.json");
        let mut text = inst.to_json();
        text.push('\n');
        write_file(&out.join(&file), text.as_bytes())?;
        listed.push(json!({
            "file": file,
            "name": inst.name(),
            "seed": s,
            "capacity": inst.capacity(),
        }));
    }
    write_manifest(
        &out.join("manifest.json"),
        &json!({
            "command": "generate",
            "version": VERSION,
            "n": n,
            "count": count,
            "seed": seed,
            "instances": listed,
        }),
    )?;
    println!("wrote {count} instances to {}", out.display());
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(p) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

pub fn solve(
    instance: &Path,
    config: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
    checkpoint: Option<&Path>,
    dry_run: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    overrides.apply(&mut cfg);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let inst = load_instance(instance)?;
    let key = instance_key(&inst, instance);
    let inst = inst.with_name(key.clone());

    fs::create_dir_all(out).map_err(domain(out))?;
    let resolved = cfg.resolved();
    write_manifest(
        &out.join("manifest.json"),
        &json!({
            "command": "solve",
            "version": VERSION,
            "instance": {
                "path": instance,
                "name": key,
                "n": inst.n(),
                "seed": inst.seed(),
            },
            "config": resolved,
            "checkpoint": checkpoint,
            "outputs": ["curve.csv", "solution.json"],
        }),
    )?;
    if dry_run {
        return Ok(());
    }

    let total = cfg.iterations();
    let report = run_with(&inst, &cfg, checkpoint, &mut |row| {
        log::info!(
            "iteration {}/{total}: cost {:.4}, best {:.4}, {} records",
            row.iteration,
            row.cost,
            row.best_cost,
            row.records
        );
    })
    .map_err(|e| CliError::Domain(e.to_string()))?;

    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    write_file(&out.join("curve.csv"), &csv)?;
    let mut sol = serde_json::to_vec_pretty(&report).expect("report serializes");
    sol.push(b'\n');
    write_file(&out.join("solution.json"), &sol)?;
    println!(
        "{key}: final cost {:.6}, best {:.6} at iteration {}",
        report.last.cost, report.best.cost, report.best_iteration
    );
    Ok(())
}

fn baseline_cost(which: Baseline, path: &Path, seed: u64) -> Result<BaselineRow, CliError> {
    let inst = load_instance(path)?;
    let cost = match which {
        Baseline::Greedy => {
            let cfg = greedy_config(seed);
            run(&inst, &cfg).map_err(|e| CliError::Domain(e.to_string()))?.last.cost
        }
        Baseline::Oracle => {
            exact_cvrp(&inst)
                .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?
                .0
        }
    };
    Ok(BaselineRow {
        instance: instance_key(&inst, path),
        method: which.name().to_string(),
        cost,
    })
}

fn greedy_config(seed: u64) -> RunConfig {
    RunConfig {
        iterations: Some(0),
        seed,
        ..RunConfig::default()
    }
}

pub fn baseline(which: Baseline, path: &Path, out: Option<&Path>, seed: u64) -> Result<(), CliError> {
    let files = if path.is_dir() {
        list_instances(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let mut rows = Vec::with_capacity(files.len());
    for f in &files {
        let row = baseline_cost(which, f, seed)?;
        log::info!("{}: {:.6}", row.instance, row.cost);
        rows.push(row);
    }
    let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
    match out {
        Some(p) => {
            let f = fs::File::create(p).map_err(domain(p))?;
            write_baseline(io::BufWriter::new(f), &rows)?;
            write_manifest(
                &p.with_extension("manifest.json"),
                &json!({
                    "command": "baseline",
                    "version": VERSION,
                    "method": which.name(),
                    "path": path,
                    "seed": seed,
                    "config": (which == Baseline::Greedy).then(|| greedy_config(seed).resolved()),
                    "instances": files,
                }),
            )?;
            if let Some(s) = Summary::of(&costs) {
                println!("{}: {s}", which.name());
            }
        }
        None => write_baseline(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

struct LoadedRun {
    dir: PathBuf,
    report: RunReport,
}

fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let sol = dir.join("solution.json");
    let f = fs::File::open(&sol).map_err(domain(&sol))?;
    let report: RunReport = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| CliError::Domain(format!("{}: {e}", sol.display())))?;
    let curve = dir.join("curve.csv");
    let f = fs::File::open(&curve).map_err(domain(&curve))?;
    let rows = read_csv(BufReader::new(f)).map_err(|e| CliError::Domain(format!("{}: {e}", curve.display())))?;
    if rows != report.rows {
        return Err(CliError::Domain(format!(
            "{}: curve.csv and solution.json disagree",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        report,
    })
}

fn reference_costs(files: &[PathBuf]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    let mut first_set: Option<BTreeSet<String>> = None;
    for f in files {
        let rows = read_baseline(f)?;
        let set: BTreeSet<String> = rows.iter().map(|r| r.instance.clone()).collect();
        if set.len() != rows.len() {
            return Err(CliError::Domain(format!("{}: duplicate instances", f.display())));
        }
        match &first_set {
            None => first_set = Some(set),
            Some(s) if *s != set => {
                return Err(CliError::Domain(format!(
                    "{}: instance set differs from {}",
                    f.display(),
                    files[0].display()
                )))
            }
            Some(_) => {}
        }
        for r in rows {
            let e = best.entry(r.instance).or_insert(f64::INFINITY);
            *e = e.min(r.cost);
        }
    }
    Ok(best)
}

fn mismatch(label: &str, names: &[&String]) -> String {
    let shown: Vec<&str> = names.iter().take(5).map(|s| s.as_str()).collect();
    let more = if names.len() > 5 {
        format!(" and {} more", names.len() - 5)
    } else {
        String::new()
    };
    format!("{label}: {}{more}", shown.join(", "))
}

pub fn report(runs: &[PathBuf], references: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let reference = reference_costs(references)?;
    let mut by_instance: BTreeMap<String, LoadedRun> = BTreeMap::new();
    for dir in runs {
        let run = load_run(dir)?;
        let key = run
            .report
            .instance
            .clone()
            .ok_or_else(|| CliError::Domain(format!("{}: run has no instance name", dir.display())))?;
        if let Some(prev) = by_instance.get(&key) {
            return Err(CliError::Domain(format!(
                "instance {key} appears in both {} and {}",
                prev.dir.display(),
                dir.display()
            )));
        }
        by_instance.insert(key, run);
    }
    let no_ref: Vec<&String> = by_instance.keys().filter(|k| !reference.contains_key(*k)).collect();
    let no_run: Vec<&String> = reference.keys().filter(|k| !by_instance.contains_key(*k)).collect();
    if !no_ref.is_empty() || !no_run.is_empty() {
        let mut parts = Vec::new();
        if !no_ref.is_empty() {
            parts.push(mismatch("runs without a reference", &no_ref));
        }
        if !no_run.is_empty() {
            parts.push(mismatch("references without a run", &no_run));
        }
        return Err(CliError::Domain(format!("mismatched instance sets; {}", parts.join("; "))));
    }

    let g = |cost: f64, key: &str| gap(cost, reference[key]).map_err(|e| CliError::Domain(format!("{key}: {e}")));
    let mut rows = Vec::with_capacity(by_instance.len());
    for (key, run) in &by_instance {
        let r = &run.report;
        rows.push(ReportRow {
            instance: key.clone(),
            reference: reference[key],
            last_cost: r.last.cost,
            best_cost: r.best.cost,
            last_gap: g(r.last.cost, key)?,
            best_gap: g(r.best.cost, key)?,
            best_iteration: r.best_iteration,
        });
    }

    let len = by_instance.values().map(|r| r.report.rows.len()).min().unwrap_or(0);
    if by_instance.values().any(|r| r.report.rows.len() != len) {
        log::warn!("runs have different lengths; curves stop at iteration {}", len.saturating_sub(1));
    }
    let mut curves = Vec::with_capacity(len);
    for it in 0..len {
        let mut gaps = Vec::new();
        let mut best = Vec::new();
        for (key, run) in &by_instance {
            let row = &run.report.rows[it];
            gaps.push(g(row.cost, key)?);
            best.push(g(row.best_cost, key)?);
        }
        let (a, b) = (Summary::of(&gaps).expect("nonempty"), Summary::of(&best).expect("nonempty"));
        curves.push(CurveRow {
            iteration: it,
            runs: gaps.len(),
            mean_gap: a.mean,
            sem_gap: a.sem,
            mean_best_gap: b.mean,
            sem_best_gap: b.sem,
        });
    }

    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(domain(dir))?;
            let p = dir.join("report.csv");
            let f = fs::File::create(&p).map_err(domain(&p))?;
            write_report(io::BufWriter::new(f), &rows).map_err(domain(&p))?;
            let p = dir.join("curves.csv");
            let f = fs::File::create(&p).map_err(domain(&p))?;
            write_curves(io::BufWriter::new(f), &curves).map_err(domain(&p))?;
            write_manifest(
                &dir.join("manifest.json"),
                &json!({
                    "command": "report",
                    "version": VERSION,
                    "runs": runs,
                    "references": references,
                    "outputs": ["report.csv", "curves.csv"],
                }),
            )?;
            let last: Vec<f64> = rows.iter().map(|r| r.last_gap).collect();
            let best: Vec<f64> = rows.iter().map(|r| r.best_gap).collect();
            let mut so = io::stdout().lock();
            let p = |s: Option<Summary>| s.map_or("-".to_string(), |s| s.to_string());
            writeln!(so, "final gap {}", p(Summary::of(&last))).ok();
            writeln!(so, "best gap  {}", p(Summary::of(&best))).ok();
        }
        None => write_report(io::stdout().lock(), &rows).map_err(|e| CliError::Domain(e.to_string()))?,
    }
    Ok(())
}
