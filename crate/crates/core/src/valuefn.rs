//! One-hidden-layer ReLU cost-to-go estimator and its trainer.

use num_traits::{Float, FromPrimitive};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::State;
use crate::rng::{self, splitmix64};

/// `V(x) = b_out + Σ_p w_out[p] · max(0, w[p]·x + b[p])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    inputs: usize,
    hidden: usize,
    /// Row-major `hidden × inputs`.
    w: Vec<T>,
    b: Vec<T>,
    w_out: Vec<T>,
    b_out: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("expected {expected} {what}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite parameter")]
    NonFinite,
}

impl<T: Float> Network<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            w: vec![T::zero(); inputs * hidden],
            b: vec![T::zero(); hidden],
            w_out: vec![T::zero(); hidden],
            b_out: T::zero(),
        }
    }

    /// Constant network with no hidden units.
    pub fn constant(inputs: usize, value: T) -> Self {
        let mut net = Self::zeros(inputs, 0);
        net.b_out = value;
        net
    }

    pub fn from_parts(
        inputs: usize,
        w: Vec<Vec<T>>,
        b: Vec<T>,
        w_out: Vec<T>,
        b_out: T,
    ) -> Result<Self, NetError> {
        let hidden = w.len();
        for row in &w {
            if row.len() != inputs {
                return Err(NetError::Shape {
                    what: "hidden weights per row",
                    expected: inputs,
                    got: row.len(),
                });
            }
        }
        for (what, v) in [("hidden biases", &b), ("output weights", &w_out)] {
            if v.len() != hidden {
                return Err(NetError::Shape {
                    what,
                    expected: hidden,
                    got: v.len(),
                });
            }
        }
        let net = Self {
            inputs,
            hidden,
            w: w.into_iter().flatten().collect(),
            b,
            w_out,
            b_out,
        };
        if net.params().iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite);
        }
        Ok(net)
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn random(inputs: usize, hidden: usize, rng: &mut rng::Rng) -> Self
    where
        T: FromPrimitive,
    {
        let mut net = Self::zeros(inputs, hidden);
        let a = 1.0 / (inputs.max(1) as f64).sqrt();
        let c = 1.0 / (hidden.max(1) as f64).sqrt();
        for v in net.w.iter_mut() {
            *v = T::from_f64(rng.gen_range(-a..a)).expect("finite");
        }
        for v in net.w_out.iter_mut() {
            *v = T::from_f64(rng.gen_range(-c..c)).expect("finite");
        }
        net
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn weights(&self, p: usize) -> &[T] {
        &self.w[p * self.inputs..(p + 1) * self.inputs]
    }

    pub fn bias(&self, p: usize) -> T {
        self.b[p]
    }

    pub fn output_weight(&self, p: usize) -> T {
        self.w_out[p]
    }

    pub fn output_bias(&self) -> T {
        self.b_out
    }

    pub fn pre_activation(&self, p: usize, x: &[T]) -> T {
        self.weights(p)
            .iter()
            .zip(x)
            .fold(self.b[p], |acc, (&w, &xi)| acc + w * xi)
    }

    pub fn forward(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.inputs, "input width");
        (0..self.hidden).fold(self.b_out, |acc, p| {
            acc + self.w_out[p] * self.pre_activation(p, x).max(T::zero())
        })
    }

    pub fn forward_state(&self, s: &State) -> T {
        self.forward(&s.features())
    }

    /// Sets every weight and bias with `|v| < threshold` to zero.
    pub fn zero_small_weights(&self, threshold: T) -> Self {
        let mut out = self.clone();
        let clip = |v: &mut T| {
            if v.abs() < threshold {
                *v = T::zero();
            }
        };
        out.w.iter_mut().for_each(clip);
        out.b.iter_mut().for_each(clip);
        out.w_out.iter_mut().for_each(clip);
        clip(&mut out.b_out);
        out
    }

    /// Number of weights, biases excluded.
    pub fn num_weights(&self) -> usize {
        self.w.len() + self.w_out.len()
    }

    /// Flattened parameters: hidden weights (row-major), hidden biases,
    /// output weights, output bias.
    pub fn params(&self) -> Vec<T> {
        let mut v = self.w.clone();
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v
    }

    pub fn set_params(&mut self, p: &[T]) {
        let (nw, h) = (self.w.len(), self.hidden);
        assert_eq!(p.len(), nw + 2 * h + 1, "parameter count");
        self.w.copy_from_slice(&p[..nw]);
        self.b.copy_from_slice(&p[nw..nw + h]);
        self.w_out.copy_from_slice(&p[nw + h..nw + 2 * h]);
        self.b_out = p[nw + 2 * h];
    }

    /// Multiplies the output layer, so `forward` scales by `s`.
    pub fn scale_output(&mut self, s: T) {
        self.w_out.iter_mut().for_each(|v| *v = *v * s);
        self.b_out = self.b_out * s;
    }

    /// True for the positions of [`Network::params`] that count as weights
    /// for the LASSO term.
    fn is_weight(&self, k: usize) -> bool {
        let (nw, h) = (self.w.len(), self.hidden);
        k < nw || (nw + h..nw + 2 * h).contains(&k)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetJson {
    inputs: usize,
    hidden: usize,
    hidden_weights: Vec<Vec<f64>>,
    hidden_bias: Vec<f64>,
    output_weights: Vec<f64>,
    output_bias: f64,
}

impl<T: Float + FromPrimitive> Network<T> {
    pub fn to_json(&self) -> String {
        let f = |v: &T| v.to_f64().expect("float");
        let rec = NetJson {
            inputs: self.inputs,
            hidden: self.hidden,
            hidden_weights: (0..self.hidden)
                .map(|p| self.weights(p).iter().map(f).collect())
                .collect(),
            hidden_bias: self.b.iter().map(f).collect(),
            output_weights: self.w_out.iter().map(f).collect(),
            output_bias: f(&self.b_out),
        };
        serde_json::to_string_pretty(&rec).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetJsonError> {
        let rec: NetJson = serde_json::from_str(text)?;
        let t = |v: f64| T::from_f64(v).ok_or(NetError::NonFinite);
        let conv = |v: Vec<f64>| v.into_iter().map(t).collect::<Result<Vec<T>, _>>();
        if rec.hidden_weights.len() != rec.hidden {
            return Err(NetError::Shape {
                what: "hidden rows",
                expected: rec.hidden,
                got: rec.hidden_weights.len(),
            }
            .into());
        }
        let w = rec
            .hidden_weights
            .into_iter()
            .map(conv)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_parts(
            rec.inputs,
            w,
            conv(rec.hidden_bias)?,
            conv(rec.output_weights)?,
            t(rec.output_bias)?,
        )?)
    }
}

#[derive(Debug, Error)]
pub enum NetJsonError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Net(#[from] NetError),
}

// --- data ----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub id: u64,
    pub state: State,
    pub cost: T,
    pub iteration: usize,
}

/// Records from all iterations so far, weighted by `γ^(k − k')`.
#[derive(Clone, Debug)]
pub struct RetainedDataset<T> {
    records: Vec<Record<T>>,
    current: usize,
    gamma: T,
    holdout_fraction: f64,
    seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("retention factor must lie in [0, 1]")]
    Gamma,
    #[error("holdout fraction must lie in [0, 1)")]
    Holdout,
    #[error("iteration {got} precedes current iteration {current}")]
    Backwards { current: usize, got: usize },
}

impl<T: Float> RetainedDataset<T> {
    /// `gamma = 0` keeps only the current iteration's records in play.
    pub fn new(gamma: T, holdout_fraction: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(DatasetError::Gamma);
        }
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(DatasetError::Holdout);
        }
        Ok(Self {
            records: Vec::new(),
            current: 0,
            gamma,
            holdout_fraction,
            seed,
        })
    }

    /// Appends records tagged with iteration `k`, which becomes current.
    pub fn push(&mut self, k: usize, records: impl IntoIterator<Item = (State, T)>) -> Result<(), DatasetError> {
        if k < self.current {
            return Err(DatasetError::Backwards {
                current: self.current,
                got: k,
            });
        }
        self.current = k;
        for (state, cost) in records {
            let id = self.records.len() as u64;
            self.records.push(Record {
                id,
                state,
                cost,
                iteration: k,
            });
        }
        Ok(())
    }

    pub fn records(&self) -> &[Record<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn current_iteration(&self) -> usize {
        self.current
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn holdout_fraction(&self) -> f64 {
        self.holdout_fraction
    }

    pub fn weight(&self, r: &Record<T>) -> T {
        let age = (self.current - r.iteration) as i32;
        if age == 0 {
            T::one()
        } else {
            self.gamma.powi(age)
        }
    }

    /// Hash of (record id, seed) compared against the holdout fraction.
    pub fn in_holdout(&self, r: &Record<T>) -> bool {
        let h = splitmix64(rng::derive_seed(self.seed, &[rng::stream::HOLDOUT, r.id]));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        u < self.holdout_fraction
    }

    /// (train, holdout) indices among positively weighted records. An
    /// empty training side takes everything.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut hold = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if self.weight(r) <= T::zero() {
                continue;
            }
            if self.in_holdout(r) {
                hold.push(i);
            } else {
                train.push(i);
            }
        }
        if train.is_empty() {
            train.append(&mut hold);
            train.sort_unstable();
        }
        (train, hold)
    }
}

// --- training ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// `None` picks 0.1 for 16 or more hidden units and 0 below.
    pub lasso: Option<f64>,
    pub threshold: f64,
    pub seed: u64,
    /// Targets are divided by this before fitting and the output layer is
    /// rescaled afterwards. `None` means 1.
    pub target_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 5e-4,
            batch_size: 10,
            epochs: 500,
            lasso: None,
            threshold: 1e-3,
            seed: 0,
            target_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_lasso(&self) -> f64 {
        self.lasso
            .unwrap_or(if self.hidden >= 16 { 0.1 } else { 0.0 })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.effective_lasso() >= 0.0
            && self.threshold >= 0.0
            && self.target_scale.is_none_or(|s| s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("empty dataset")]
    Empty,
    #[error("invalid training configuration")]
    Config,
    #[error("training loss became non-finite in epoch {0}")]
    Diverged(usize),
}

/// One weighted training example in network units.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub target: T,
    pub weight: T,
    /// Largest lower bound at this state; the prediction is clipped from
    /// below by it.
    pub lower_bound: Option<T>,
}

fn prediction<T: Float>(net: &Network<T>, s: &Sample<T>) -> (T, bool) {
    let f = net.forward(&s.x);
    match s.lower_bound {
        Some(lb) if lb > f => (lb, false),
        _ => (f, true),
    }
}

/// Training objective: weighted MSE normalized by the weight sum, plus
/// `(λ/|w|)·‖w‖₁` over weights (biases excluded).
pub fn objective<T: Float + FromPrimitive>(net: &Network<T>, data: &[Sample<T>], lasso: T) -> T {
    let (mut sse, mut wsum) = (T::zero(), T::zero());
    for s in data {
        let e = prediction(net, s).0 - s.target;
        sse = sse + s.weight * e * e;
        wsum = wsum + s.weight;
    }
    let mse = if wsum > T::zero() { sse / wsum } else { T::zero() };
    mse + lasso_term(net, lasso)
}

fn lasso_term<T: Float + FromPrimitive>(net: &Network<T>, lasso: T) -> T {
    if lasso == T::zero() || net.num_weights() == 0 {
        return T::zero();
    }
    let l1 = net
        .w
        .iter()
        .chain(&net.w_out)
        .fold(T::zero(), |a, v| a + v.abs());
    lasso * l1 / T::from_usize(net.num_weights()).expect("count")
}

/// Gradient of [`objective`] in [`Network::params`] order. Kinks use the
/// zero subgradient for ReLU at 0 and `|·|` at 0; a tie between the
/// network and the lower bound goes to the network.
pub fn gradient<T: Float + FromPrimitive>(net: &Network<T>, data: &[Sample<T>], lasso: T) -> Vec<T> {
    let wsum = data.iter().fold(T::zero(), |a, s| a + s.weight);
    let mut g = vec![T::zero(); net.params().len()];
    if wsum > T::zero() {
        let mut act = vec![T::zero(); net.hidden];
        for s in data {
            accumulate(net, s, T::one() / wsum, &mut act, &mut g);
        }
    }
    add_lasso_grad(net, lasso, &mut g);
    g
}

fn add_lasso_grad<T: Float + FromPrimitive>(net: &Network<T>, lasso: T, g: &mut [T]) {
    if lasso == T::zero() || net.num_weights() == 0 {
        return;
    }
    let c = lasso / T::from_usize(net.num_weights()).expect("count");
    let p = net.params();
    for (k, gk) in g.iter_mut().enumerate() {
        if net.is_weight(k) && p[k] != T::zero() {
            *gk = *gk + c * p[k].signum();
        }
    }
}

/// Adds `scale · ∂(weight · err²)/∂θ` for one sample.
fn accumulate<T: Float>(net: &Network<T>, s: &Sample<T>, scale: T, act: &mut [T], g: &mut [T]) {
    let (n, h) = (net.inputs, net.hidden);
    let mut f = net.b_out;
    for (p, a) in act.iter_mut().enumerate() {
        *a = net.pre_activation(p, &s.x);
        f = f + net.w_out[p] * a.max(T::zero());
    }
    let through_net = !matches!(s.lower_bound, Some(lb) if lb > f);
    if !through_net {
        return;
    }
    let two = T::one() + T::one();
    let d = scale * s.weight * two * (f - s.target);
    let nw = n * h;
    g[nw + 2 * h] = g[nw + 2 * h] + d;
    for p in 0..h {
        if act[p] > T::zero() {
            g[nw + h + p] = g[nw + h + p] + d * act[p];
            let dp = d * net.w_out[p];
            g[nw + p] = g[nw + p] + dp;
            let row = &mut g[p * n..(p + 1) * n];
            for (gi, &xi) in row.iter_mut().zip(&s.x) {
                if xi != T::zero() {
                    *gi = *gi + dp * xi;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub net: Network<T>,
    /// Weighted MSE on the training side, original units.
    pub train_mse: T,
    /// Weighted MSE on the holdout side; `None` when it is empty.
    pub holdout_mse: Option<T>,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Fits a freshly initialized network to the retained data by batch SGD.
/// `lower_bound(s)` supplies the clipping bound used in the prediction.
pub fn train<T, L>(
    data: &RetainedDataset<T>,
    cfg: &TrainConfig,
    lower_bound: Option<L>,
) -> Result<TrainOutcome<T>, TrainError>
where
    T: Float + FromPrimitive,
    L: Fn(&State) -> T,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let inputs = data.records()[0].state.n();
    let scale = T::from_f64(cfg.target_scale.unwrap_or(1.0)).expect("finite");
    let make = |idx: &[usize]| -> Vec<Sample<T>> {
        idx.iter()
            .map(|&i| {
                let r = &data.records()[i];
                Sample {
                    x: r.state.features(),
                    target: r.cost / scale,
                    weight: data.weight(r),
                    lower_bound: lower_bound.as_ref().map(|f| f(&r.state) / scale),
                }
            })
            .collect()
    };
    let (train_idx, hold_idx) = data.split();
    if train_idx.is_empty() {
        return Err(TrainError::Empty);
    }
    let train_set = make(&train_idx);
    let hold_set = make(&hold_idx);

    let mut rng = rng::rng_from(cfg.seed, &[rng::stream::TRAIN, data.current_iteration() as u64]);
    let mut net = Network::<T>::random(inputs, cfg.hidden, &mut rng);
    let lasso = T::from_f64(cfg.effective_lasso()).expect("finite");
    let lr = T::from_f64(cfg.learning_rate).expect("finite");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut params = net.params();
    let mut g = vec![T::zero(); params.len()];
    let mut act = vec![T::zero(); cfg.hidden];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            g.iter_mut().for_each(|v| *v = T::zero());
            let wsum = batch.iter().fold(T::zero(), |a, &i| a + train_set[i].weight);
            let inv = T::one() / wsum;
            for &i in batch {
                accumulate(&net, &train_set[i], inv, &mut act, &mut g);
            }
            add_lasso_grad(&net, lasso, &mut g);
            for (p, gk) in params.iter_mut().zip(&g) {
                *p = *p - lr * *gk;
            }
            net.set_params(&params);
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(TrainError::Diverged(epoch));
        }
    }
    let loss = objective(&net, &train_set, lasso);
    if !loss.is_finite() {
        return Err(TrainError::Diverged(cfg.epochs));
    }
    net = net.zero_small_weights(T::from_f64(cfg.threshold).expect("finite"));
    let mse = |set: &[Sample<T>]| objective(&net, set, T::zero()) * scale * scale;
    let train_mse = mse(&train_set);
    let holdout_mse = (!hold_set.is_empty()).then(|| mse(&hold_set));
    // Fold the scale into the output layer. The threshold applied above
    // is relative to the scaled problem.
    net.scale_output(scale);
    Ok(TrainOutcome {
        net,
        train_mse,
        holdout_mse,
        train_size: train_set.len(),
        holdout_size: hold_set.len(),
    })
}

/// Convenience for callers without lower bounds.
pub fn no_lower_bound<T>() -> Option<fn(&State) -> T> {
    None
}
