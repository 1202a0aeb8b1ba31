//! The outer policy-iteration loop: roll out the current policy from
//! random start states, retrain the value network on the retained data,
//! and act greedily with respect to it.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actionsel::{max_lower_bound, ActionConfig, MilpPolicy, SolveDiagnostics, Tail};
use crate::instances::CvrpInstance;
use crate::mdp::{evaluate_policy_from_state, random_nonterminal_start, MdpError, SamplePath, State, StateRecord};
use crate::rng::{self, stream};
use crate::valuefn::{self, DatasetError, NetJsonError, Network, RetainedDataset, TrainConfig, TrainError};

/// Start-state redraws before falling back to the all-unvisited state.
const MAX_START_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Default,
    HighParallelism,
}

impl Mode {
    /// (iterations, paths per iteration).
    pub fn defaults(self) -> (usize, usize) {
        match self {
            Mode::Default => (250, 10),
            Mode::HighParallelism => (100, 200),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Policy iterations; `None` takes the mode default.
    pub iterations: Option<usize>,
    /// Sample paths per iteration; `None` takes the mode default.
    pub paths: Option<usize>,
    /// Retention factor in [0, 1].
    pub gamma: f64,
    pub holdout_fraction: f64,
    /// `seed` is replaced by a stream derived from the master seed and
    /// `target_scale` defaults to the mean out-and-back distance.
    pub train: TrainConfig,
    pub action: ActionConfig,
    /// Fit `max(net, bounds)` instead of the bare net. Off by default: from
    /// a small initialization most samples start clipped and pass no
    /// gradient, and SGD settles far below the targets.
    pub train_lower_bounds: bool,
    /// Concurrent rollouts.
    pub width: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Default,
            iterations: None,
            paths: None,
            gamma: 1.0,
            holdout_fraction: 0.1,
            train: TrainConfig::default(),
            action: ActionConfig::default(),
            train_lower_bounds: false,
            width: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(self.mode.defaults().0)
    }

    pub fn paths(&self) -> usize {
        self.paths.unwrap_or(self.mode.defaults().1)
    }

    /// Copy with mode defaults written out, for manifests.
    pub fn resolved(&self) -> Self {
        Self {
            iterations: Some(self.iterations()),
            paths: Some(self.paths()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(RunError::Config("gamma must lie in [0, 1]".into()));
        }
        if self.width == 0 {
            return Err(RunError::Config("width must be positive".into()));
        }
        if self.iterations() > 0 && self.paths() == 0 {
            return Err(RunError::Config("at least one path per iteration is needed".into()));
        }
        self.train
            .validate()
            .map_err(|e| RunError::Config(format!("train: {e}")))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("iteration {iteration}, path {path}: {source}")]
    Rollout {
        iteration: usize,
        path: usize,
        source: MdpError,
    },
    #[error("evaluation after iteration {iteration}: {source}")]
    Evaluation { iteration: usize, source: MdpError },
    #[error("training in iteration {iteration}: {source}")]
    Train { iteration: usize, source: TrainError },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One row of the learning curve. Row 0 evaluates the initial policy;
/// row k evaluates the policy after the k-th retraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    /// Full-start cost of this row's policy.
    pub cost: f64,
    /// Running minimum of `cost`.
    pub best_cost: f64,
    pub train_mse: Option<f64>,
    pub holdout_mse: Option<f64>,
    pub rollouts: usize,
    /// Retained records after this iteration.
    pub records: usize,
    pub solves: usize,
    /// Solves that returned the warm-start route.
    pub fallbacks: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub cost: f64,
    /// Route interiors (depot omitted).
    pub routes: Vec<Vec<usize>>,
}

impl Solution {
    fn from_path(p: &SamplePath) -> Self {
        Self {
            cost: p.total_cost(),
            routes: p.routes().map(|r| r.interior().to_vec()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: Option<String>,
    pub config: RunConfig,
    pub rows: Vec<IterationRow>,
    /// The last policy's full-start solution.
    pub last: Solution,
    /// Best full-start solution over all rows.
    pub best: Solution,
    pub best_iteration: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("reference cost must be positive, got {0}")]
pub struct GapError(pub f64);

/// `(cost − reference) / reference`.
pub fn gap(cost: f64, reference: f64) -> Result<f64, GapError> {
    if reference > 0.0 && reference.is_finite() {
        Ok((cost - reference) / reference)
    } else {
        Err(GapError(reference))
    }
}

pub const CSV_SCHEMA: &str = "# schema: cvrp-run v1";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("expected schema line `{CSV_SCHEMA}`, found `{0}`")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RunReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), CsvError> {
        writeln!(w, "{CSV_SCHEMA}")?;
        let mut cw = csv::Writer::from_writer(w);
        for r in &self.rows {
            cw.serialize(r)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }
}

/// Reads a learning curve written by [`RunReport::write_csv`].
pub fn read_csv<R: BufRead>(mut r: R) -> Result<Vec<IterationRow>, CsvError> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    if first.trim_end() != CSV_SCHEMA {
        return Err(CsvError::Schema(first.trim_end().to_string()));
    }
    let mut cr = csv::Reader::from_reader(r);
    Ok(cr.deserialize().collect::<Result<_, _>>()?)
}

/// Loop state persisted between iterations.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    config: RunConfig,
    instance: Option<String>,
    completed: usize,
    records: Vec<StateRecord>,
    net: Option<String>,
    rows: Vec<IterationRow>,
    last: Solution,
    best: Solution,
    best_iteration: usize,
}

struct Progress {
    dataset: RetainedDataset<f64>,
    tail: Tail,
    rows: Vec<IterationRow>,
    completed: usize,
    last: Solution,
    best: Solution,
    best_iteration: usize,
}

/// Runs policy iteration without checkpoints.
pub fn run(inst: &CvrpInstance, cfg: &RunConfig) -> Result<RunReport, RunError> {
    run_with(inst, cfg, None, &mut |_| {})
}

/// Runs policy iteration. With `checkpoint` set, the loop state is saved
/// there after every iteration and restored from it when present, so a
/// resumed run reproduces an uninterrupted one. `on_row` sees each row as
/// it is produced.
pub fn run_with(
    inst: &CvrpInstance,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    on_row: &mut dyn FnMut(&IterationRow),
) -> Result<RunReport, RunError> {
    cfg.validate()?;
    if inst.n() < 2 {
        return Err(RunError::Config("instance has no customers".into()));
    }
    let use_lb = cfg.action.lower_bounds && inst.is_metric();
    let clip = cfg.train_lower_bounds && inst.is_metric();
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = rng::derive_seed(cfg.seed, &[stream::TRAIN]);
    train_cfg.target_scale = Some(cfg.train.target_scale.unwrap_or_else(|| inst.mean_out_and_back()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.width)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;

    let restored = match checkpoint {
        Some(p) if p.exists() => Some(load_checkpoint(p, inst, cfg)?),
        _ => None,
    };
    let mut pr = match restored {
        Some(pr) => pr,
        None => {
            let start = Instant::now();
            let (path, diags) = evaluate(inst, &Tail::Greedy, cfg, 0)?;
            let sol = Solution::from_path(&path);
            let row = IterationRow {
                iteration: 0,
                cost: sol.cost,
                best_cost: sol.cost,
                train_mse: None,
                holdout_mse: None,
                rollouts: 0,
                records: 0,
                solves: diags.len(),
                fallbacks: diags.iter().filter(|d| d.fallback).count(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            on_row(&row);
            Progress {
                dataset: RetainedDataset::new(cfg.gamma, cfg.holdout_fraction, cfg.seed)?,
                tail: Tail::Greedy,
                rows: vec![row],
                completed: 0,
                last: sol.clone(),
                best: sol,
                best_iteration: 0,
            }
        }
    };

    for k in pr.completed..cfg.iterations() {
        let start = Instant::now();
        let tail = &pr.tail;
        let rollout = |i: usize| -> Result<(SamplePath, Vec<SolveDiagnostics>), RunError> {
            let mut rng = rng::rng_from(cfg.seed, &[stream::ROLLOUT, k as u64, i as u64]);
            let s0 = random_nonterminal_start(inst, &mut rng, MAX_START_DRAWS).unwrap_or_else(|| State::start(inst.n()));
            let mut pol = MilpPolicy::new(inst, tail, &cfg.action, rng);
            let path = evaluate_policy_from_state(inst, &mut pol, &s0).map_err(|source| RunError::Rollout {
                iteration: k,
                path: i,
                source,
            })?;
            Ok((path, pol.diagnostics))
        };
        let paths: Vec<_> = if cfg.width == 1 {
            (0..cfg.paths()).map(rollout).collect::<Result<_, _>>()?
        } else {
            pool.install(|| (0..cfg.paths()).into_par_iter().map(rollout).collect::<Result<_, _>>())?
        };
        let mut diags: Vec<SolveDiagnostics> = Vec::new();
        let mut batch = Vec::new();
        for (p, d) in &paths {
            batch.extend(p.records().map(|(s, c)| (s.clone(), c)));
            diags.extend(d.iter().cloned());
        }
        pr.dataset.push(k, batch)?;

        let lb = clip.then_some(|s: &State| max_lower_bound(inst, s).unwrap_or(0.0));
        let fit = valuefn::train(&pr.dataset, &train_cfg, lb).map_err(|source| RunError::Train { iteration: k, source })?;
        pr.tail = Tail::Net {
            net: fit.net,
            lower_bounds: use_lb,
        };

        let (path, eval_diags) = evaluate(inst, &pr.tail, cfg, k + 1)?;
        diags.extend(eval_diags);
        let sol = Solution::from_path(&path);
        if sol.cost < pr.best.cost {
            pr.best = sol.clone();
            pr.best_iteration = k + 1;
        }
        let row = IterationRow {
            iteration: k + 1,
            cost: sol.cost,
            best_cost: pr.best.cost,
            train_mse: Some(fit.train_mse),
            holdout_mse: fit.holdout_mse,
            rollouts: paths.len(),
            records: pr.dataset.len(),
            solves: diags.len(),
            fallbacks: diags.iter().filter(|d| d.fallback).count(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::info!(
            "iteration {}: cost {:.4}, best {:.4}, {} records",
            row.iteration,
            row.cost,
            row.best_cost,
            row.records
        );
        on_row(&row);
        pr.rows.push(row);
        pr.last = sol;
        pr.completed = k + 1;
        if let Some(p) = checkpoint {
            save_checkpoint(p, inst, cfg, &pr)?;
        }
    }

    Ok(RunReport {
        instance: inst.name().map(str::to_string),
        config: cfg.resolved(),
        rows: pr.rows,
        last: pr.last,
        best: pr.best,
        best_iteration: pr.best_iteration,
    })
}

/// Full-start evaluation of the policy defined by `tail`.
fn evaluate(
    inst: &CvrpInstance,
    tail: &Tail,
    cfg: &RunConfig,
    iteration: usize,
) -> Result<(SamplePath, Vec<SolveDiagnostics>), RunError> {
    let rng = rng::rng_from(cfg.seed, &[stream::EVAL, iteration as u64]);
    let mut pol = MilpPolicy::new(inst, tail, &cfg.action, rng);
    let path = evaluate_policy_from_state(inst, &mut pol, &State::start(inst.n()))
        .map_err(|source| RunError::Evaluation { iteration, source })?;
    Ok((path, pol.diagnostics))
}

fn save_checkpoint(path: &Path, inst: &CvrpInstance, cfg: &RunConfig, pr: &Progress) -> Result<(), RunError> {
    let ck = Checkpoint {
        config: cfg.resolved(),
        instance: inst.name().map(str::to_string),
        completed: pr.completed,
        records: pr
            .dataset
            .records()
            .iter()
            .map(|r| StateRecord {
                state: r.state.to_hex(),
                cost: r.cost,
                iteration: r.iteration,
            })
            .collect(),
        net: match &pr.tail {
            Tail::Net { net, .. } => Some(net.to_json()),
            Tail::Greedy => None,
        },
        rows: pr.rows.clone(),
        last: pr.last.clone(),
        best: pr.best.clone(),
        best_iteration: pr.best_iteration,
    };
    // Write then rename so an interrupted save leaves the old file intact.
    let tmp = PathBuf::from(format!("{}.tmp", path.display()));
    fs::write(&tmp, serde_json::to_vec(&ck).map_err(io::Error::from)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_checkpoint(path: &Path, inst: &CvrpInstance, cfg: &RunConfig) -> Result<Progress, RunError> {
    let bad = |m: String| RunError::Checkpoint(format!("{}: {m}", path.display()));
    let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?).map_err(|e| bad(e.to_string()))?;
    // Iteration count may grow and width may change on resume; everything
    // else must match.
    let strip = |c: &RunConfig| RunConfig {
        iterations: None,
        width: 1,
        ..c.resolved()
    };
    if strip(&ck.config) != strip(cfg) {
        return Err(bad("configuration differs from the checkpointed run".into()));
    }
    if ck.instance.as_deref() != inst.name() {
        return Err(bad(format!("checkpoint is for instance {:?}", ck.instance)));
    }
    let mut dataset = RetainedDataset::new(cfg.gamma, cfg.holdout_fraction, cfg.seed)?;
    let mut i = 0;
    while i < ck.records.len() {
        let k = ck.records[i].iteration;
        let mut group = Vec::new();
        while i < ck.records.len() && ck.records[i].iteration == k {
            let r = &ck.records[i];
            let s = State::from_hex(inst.n(), &r.state).map_err(|e| bad(e.to_string()))?;
            group.push((s, r.cost));
            i += 1;
        }
        dataset.push(k, group)?;
    }
    let tail = match ck.net {
        Some(text) => Tail::Net {
            net: Network::from_json(&text).map_err(|e: NetJsonError| bad(e.to_string()))?,
            lower_bounds: cfg.action.lower_bounds && inst.is_metric(),
        },
        None => Tail::Greedy,
    };
    Ok(Progress {
        dataset,
        tail,
        rows: ck.rows,
        completed: ck.completed,
        last: ck.last,
        best: ck.best,
        best_iteration: ck.best_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_values() {
        assert_eq!(gap(2.0, 2.0).unwrap(), 0.0);
        assert!((gap(4.90, 4.55).unwrap() - 0.0769).abs() < 1e-4);
        assert!(gap(1.0, 0.0).is_err());
    }

    #[test]
    fn mode_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.iterations(), c.paths()), (250, 10));
        let h = RunConfig {
            mode: Mode::HighParallelism,
            ..RunConfig::default()
        };
        assert_eq!((h.iterations(), h.paths()), (100, 200));
    }
}
