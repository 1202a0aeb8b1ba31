//! Command-line flags for every run configuration field.

use clap::Args;
use cvrp_core::actionsel::{BigMMode, BranchOrder};
use cvrp_core::policy::{Mode, RunConfig};
use serde::de::DeserializeOwned;

/// Parses an enum by its configuration-file spelling; `-` and `_` are
/// interchangeable.
fn config_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let try_parse = |v: &str| serde_json::from_value::<T>(serde_json::Value::String(v.to_string()));
    try_parse(s)
        .or_else(|_| try_parse(&s.replace('-', "_")))
        .or_else(|_| try_parse(&s.replace('_', "-")))
        .map_err(|e| e.to_string())
}

#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// Iteration and path defaults: `default` (250 x 10) or
    /// `high-parallelism` (100 x 200).
    #[arg(long, value_parser = config_enum::<Mode>)]
    pub mode: Option<Mode>,
    /// Policy iterations K.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Sample paths per iteration N.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Retention factor in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Fit max(net, lower bounds) during training.
    #[arg(long)]
    pub train_lower_bounds: Option<bool>,
    /// Concurrent rollouts. Results do not depend on it.
    #[arg(long, env = "CVRP_WIDTH")]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Hidden units H.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// LASSO weight; defaults to 0.1 for H >= 16 and 0 below.
    #[arg(long)]
    pub lasso: Option<f64>,
    /// Early-stopping threshold on the training loss change.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Divisor applied to cost targets; defaults to the mean out-and-back
    /// distance.
    #[arg(long)]
    pub target_scale: Option<f64>,

    #[arg(long)]
    pub relu_cuts: Option<bool>,
    #[arg(long)]
    pub fractional_cutsets: Option<bool>,
    /// Add the combinatorial lower bounds to the action objective.
    #[arg(long)]
    pub lower_bounds: Option<bool>,
    /// `interval` or `lp`.
    #[arg(long, value_parser = config_enum::<BigMMode>)]
    pub big_m: Option<BigMMode>,
    /// `fractional`, `cities-first` or `units-first`.
    #[arg(long, value_parser = config_enum::<BranchOrder>)]
    pub branching: Option<BranchOrder>,
    #[arg(long)]
    pub relaxed_units: Option<bool>,
    /// Seconds per action solve.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Branch-and-bound nodes per action solve.
    #[arg(long)]
    pub node_limit: Option<usize>,
    #[arg(long)]
    pub warm_start_restarts: Option<usize>,
    #[arg(long)]
    pub warm_start_passes: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        fn set_some<T: Clone>(dst: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *dst = v.clone();
            }
        }
        set(&mut cfg.mode, &self.mode);
        set_some(&mut cfg.iterations, &self.iterations);
        set_some(&mut cfg.paths, &self.paths);
        set(&mut cfg.gamma, &self.gamma);
        set(&mut cfg.holdout_fraction, &self.holdout_fraction);
        set(&mut cfg.train_lower_bounds, &self.train_lower_bounds);
        set(&mut cfg.width, &self.width);
        set(&mut cfg.seed, &self.seed);

        let t = &mut cfg.train;
        set(&mut t.hidden, &self.hidden);
        set(&mut t.learning_rate, &self.learning_rate);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.epochs, &self.epochs);
        set_some(&mut t.lasso, &self.lasso);
        set(&mut t.threshold, &self.threshold);
        set_some(&mut t.target_scale, &self.target_scale);

        let a = &mut cfg.action;
        set(&mut a.relu_cuts, &self.relu_cuts);
        set(&mut a.fractional_cutsets, &self.fractional_cutsets);
        set(&mut a.lower_bounds, &self.lower_bounds);
        set(&mut a.big_m, &self.big_m);
        set(&mut a.branching, &self.branching);
        set(&mut a.relaxed_units, &self.relaxed_units);
        set_some(&mut a.time_limit, &self.time_limit);
        set_some(&mut a.node_limit, &self.node_limit);
        set(&mut a.warm_start_restarts, &self.warm_start_restarts);
        set(&mut a.warm_start_passes, &self.warm_start_passes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_spellings() {
        assert_eq!(config_enum::<Mode>("high-parallelism").unwrap(), Mode::HighParallelism);
        assert_eq!(config_enum::<Mode>("high_parallelism").unwrap(), Mode::HighParallelism);
        assert_eq!(config_enum::<BranchOrder>("cities-first").unwrap(), BranchOrder::CitiesFirst);
        assert_eq!(config_enum::<BigMMode>("interval").unwrap(), BigMMode::Interval);
        assert!(config_enum::<BigMMode>("tight").is_err());
    }

    #[test]
    fn unset_flags_leave_the_config_alone() {
        let mut cfg = RunConfig::default();
        Overrides::default().apply(&mut cfg);
        assert_eq!(cfg, RunConfig::default());
        let o = Overrides {
            gamma: Some(0.0),
            hidden: Some(8),
            relu_cuts: Some(false),
            ..Overrides::default()
        };
        o.apply(&mut cfg);
        assert_eq!((cfg.gamma, cfg.train.hidden, cfg.action.relu_cuts), (0.0, 8, false));
    }
}
