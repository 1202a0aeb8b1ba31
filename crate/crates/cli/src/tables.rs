//! Versioned CSV tables and suite statistics.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use cvrp_core::CvrpInstance;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::CliError;

pub const BASELINE_SCHEMA: &str = "# schema: cvrp-baseline v1";
pub const REPORT_SCHEMA: &str = "# schema: cvrp-report v1";
pub const CURVES_SCHEMA: &str = "# schema: cvrp-curves v1";

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// `None` below two samples.
    pub sem: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let sem = (n >= 2).then(|| values.std_dev() / (n as f64).sqrt());
        Some(Self {
            count: n,
            mean: values.mean(),
            sem,
        })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sem {
            Some(s) => write!(f, "{:.4} ± {:.4} (n={})", self.mean, s, self.count),
            None => write!(f, "{:.4} (n={})", self.mean, self.count),
        }
    }
}

fn write_summary<W: Write>(w: &mut W, label: &str, s: &Summary) -> std::io::Result<()> {
    let sem = s.sem.map_or(String::new(), |v| v.to_string());
    writeln!(w, "# {label}: count={} mean={} sem={sem}", s.count, s.mean)
}

fn check_schema<R: BufRead>(r: &mut R, expected: &str, source: &Path) -> Result<(), CliError> {
    let mut first = String::new();
    r.read_line(&mut first)
        .map_err(|e| CliError::Domain(format!("{}: {e}", source.display())))?;
    if first.trim_end() != expected {
        return Err(CliError::Domain(format!(
            "{}: expected schema `{expected}`, found `{}`",
            source.display(),
            first.trim_end()
        )));
    }
    Ok(())
}

/// Key used to join runs with references: the instance name, or the file
/// stem for unnamed instances.
pub fn instance_key(inst: &CvrpInstance, path: &Path) -> String {
    match inst.name() {
        Some(n) => n.to_string(),
        None => path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
    }
}

pub fn load_instance(path: &Path) -> Result<CvrpInstance, CliError> {
    CvrpInstance::load(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Instance files in a directory, sorted by name. Manifests are skipped.
pub fn list_instances(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |e: std::io::Error| CliError::Domain(format!("{}: {e}", dir.display()));
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        let is_instance = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json") || e.eq_ignore_ascii_case("vrp"));
        let is_manifest = p.file_name().is_some_and(|f| f == "manifest.json");
        if p.is_file() && is_instance && !is_manifest {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub instance: String,
    pub method: String,
    pub cost: f64,
}

pub fn write_baseline<W: Write>(mut w: W, rows: &[BaselineRow]) -> Result<(), CliError> {
    let err = |e: String| CliError::Domain(format!("writing baseline table: {e}"));
    writeln!(w, "{BASELINE_SCHEMA}").map_err(|e| err(e.to_string()))?;
    {
        let mut cw = csv::Writer::from_writer(&mut w);
        for r in rows {
            cw.serialize(r).map_err(|e| err(e.to_string()))?;
        }
        cw.flush().map_err(|e| err(e.to_string()))?;
    }
    let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
    if let Some(s) = Summary::of(&costs) {
        write_summary(&mut w, "cost", &s).map_err(|e| err(e.to_string()))?;
    }
    Ok(())
}

pub fn read_baseline(path: &Path) -> Result<Vec<BaselineRow>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let mut r = std::io::BufReader::new(f);
    check_schema(&mut r, BASELINE_SCHEMA, path)?;
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: String,
    pub reference: f64,
    pub last_cost: f64,
    pub best_cost: f64,
    pub last_gap: f64,
    pub best_gap: f64,
    pub best_iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub runs: usize,
    pub mean_gap: f64,
    pub sem_gap: Option<f64>,
    /// Mean of each run's running-minimum gap.
    pub mean_best_gap: f64,
    pub sem_best_gap: Option<f64>,
}

pub fn write_report<W: Write>(mut w: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_SCHEMA}")?;
    {
        let mut cw = csv::Writer::from_writer(&mut w);
        for r in rows {
            cw.serialize(r)?;
        }
        cw.flush()?;
    }
    let last: Vec<f64> = rows.iter().map(|r| r.last_gap).collect();
    let best: Vec<f64> = rows.iter().map(|r| r.best_gap).collect();
    if let (Some(l), Some(b)) = (Summary::of(&last), Summary::of(&best)) {
        write_summary(&mut w, "last_gap", &l)?;
        write_summary(&mut w, "best_gap", &b)?;
    }
    Ok(())
}

pub fn write_curves<W: Write>(mut w: W, rows: &[CurveRow]) -> std::io::Result<()> {
    writeln!(w, "{CURVES_SCHEMA}")?;
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r)?;
    }
    cw.flush()
}
