//! CVRP instances: construction, random generation, CVRPLIB parsing and the
//! native JSON format.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Round half away from zero. Used for EUC_2D distances and for
/// [`scale_distances`].
pub fn nint(v: f64) -> f64 {
    v.round()
}

/// How `dist` relates to `coords`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceRule {
    /// Unrounded Euclidean distance.
    #[default]
    Exact,
    /// Euclidean distance rounded with [`nint`] (TSPLIB EUC_2D).
    Nint,
}

impl DistanceRule {
    fn apply(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        match self {
            DistanceRule::Exact => d,
            DistanceRule::Nint => nint(d),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("need at least 2 cities (depot plus one customer), got {0}")]
    TooFewCities(usize),
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("expected {expected} {what}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("depot demand must be 0, got {0}")]
    DepotDemand(u32),
    #[error("city {city} has demand {demand} above capacity {capacity}")]
    Unservable { city: usize, demand: u32, capacity: u32 },
    #[error("invalid distance {value} at ({i}, {j})")]
    BadDistance { i: usize, j: usize, value: f64 },
    #[error("instance marked metric but the triangle inequality fails at ({0}, {1}, {2})")]
    NotMetric(usize, usize, usize),
    #[error("instance has neither coordinates nor a distance matrix")]
    NoDistances,
    #[error("factor must be at least 1")]
    BadFactor,
}

/// Immutable problem data. City 0 is the depot.
#[derive(Clone, Debug, PartialEq)]
pub struct CvrpInstance {
    name: Option<String>,
    n: usize,
    coords: Option<Vec<[f64; 2]>>,
    rule: DistanceRule,
    dist: Vec<f64>,
    demand: Vec<u32>,
    capacity: u32,
    metric: bool,
    seed: Option<u64>,
}

impl CvrpInstance {
    /// Builds an instance from a row-major `n × n` distance matrix. The
    /// metric flag is set when the triangle inequality holds up to a
    /// relative 1e-9.
    pub fn from_matrix(dist: Vec<Vec<f64>>, demand: Vec<u32>, capacity: u32) -> Result<Self, InstanceError> {
        let n = dist.len();
        for row in &dist {
            if row.len() != n {
                return Err(InstanceError::Length {
                    what: "matrix columns",
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let flat = dist.into_iter().flatten().collect();
        Self::assemble(None, n, None, DistanceRule::Exact, flat, demand, capacity, None)
    }

    /// Builds an instance whose distances are computed from coordinates.
    pub fn from_coords(
        coords: Vec<[f64; 2]>,
        rule: DistanceRule,
        demand: Vec<u32>,
        capacity: u32,
    ) -> Result<Self, InstanceError> {
        let n = coords.len();
        let dist = coord_matrix(&coords, rule);
        Self::assemble(None, n, Some(coords), rule, dist, demand, capacity, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: Option<String>,
        n: usize,
        coords: Option<Vec<[f64; 2]>>,
        rule: DistanceRule,
        dist: Vec<f64>,
        demand: Vec<u32>,
        capacity: u32,
        seed: Option<u64>,
    ) -> Result<Self, InstanceError> {
        if n < 2 {
            return Err(InstanceError::TooFewCities(n));
        }
        if capacity == 0 {
            return Err(InstanceError::ZeroCapacity);
        }
        if demand.len() != n {
            return Err(InstanceError::Length {
                what: "demands",
                expected: n,
                got: demand.len(),
            });
        }
        if dist.len() != n * n {
            return Err(InstanceError::Length {
                what: "distance entries",
                expected: n * n,
                got: dist.len(),
            });
        }
        if demand[0] != 0 {
            return Err(InstanceError::DepotDemand(demand[0]));
        }
        for (city, &d) in demand.iter().enumerate().skip(1) {
            if d > capacity {
                return Err(InstanceError::Unservable {
                    city,
                    demand: d,
                    capacity,
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v = dist[i * n + j];
                let ok = v.is_finite() && v >= 0.0 && (i != j || v == 0.0);
                if !ok {
                    return Err(InstanceError::BadDistance { i, j, value: v });
                }
            }
        }
        let mut inst = Self {
            name,
            n,
            coords,
            rule,
            dist,
            demand,
            capacity,
            metric: false,
            seed,
        };
        inst.metric = inst.triangle_violation().is_none();
        Ok(inst)
    }

    /// First (i, j, k) with `d(i,k) > d(i,j) + d(j,k)` beyond a relative 1e-9.
    pub fn triangle_violation(&self) -> Option<(usize, usize, usize)> {
        let n = self.n;
        let scale = self.dist.iter().fold(0.0f64, |a, &b| a.max(b));
        let tol = 1e-9 * scale.max(1.0);
        for i in 0..n {
            for j in 0..n {
                let dij = self.dist(i, j);
                for k in 0..n {
                    if self.dist(i, k) > dij + self.dist(j, k) + tol {
                        return Some((i, j, k));
                    }
                }
            }
        }
        None
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn dist_row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn demand(&self, i: usize) -> u32 {
        self.demand[i]
    }

    pub fn demands(&self) -> &[u32] {
        &self.demand
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn is_metric(&self) -> bool {
        self.metric
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn distance_rule(&self) -> DistanceRule {
        self.rule
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Mean of `Δ_0i + Δ_i0` over customers; a natural cost unit.
    pub fn mean_out_and_back(&self) -> f64 {
        let s: f64 = (1..self.n).map(|i| self.dist(0, i) + self.dist(i, 0)).sum();
        s / (self.n - 1) as f64
    }

    pub fn total_demand(&self) -> u64 {
        self.demand.iter().map(|&d| d as u64).sum()
    }
}

fn coord_matrix(coords: &[[f64; 2]], rule: DistanceRule) -> Vec<f64> {
    let n = coords.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dist[i * n + j] = rule.apply(coords[i], coords[j]);
            }
        }
    }
    dist
}

/// Capacity bracket for random instances.
pub fn random_capacity(n: usize) -> u32 {
    match n {
        0..=11 => 20,
        12..=21 => 30,
        _ => 40,
    }
}

/// Uniform random instance: `n` points in the unit square (x then y for
/// each city in order), then demands `1..=9` for cities `1..n`. City 0 is
/// the depot.
pub fn generate_random(n: usize, seed: u64) -> Result<CvrpInstance, InstanceError> {
    if n < 2 {
        return Err(InstanceError::TooFewCities(n));
    }
    let mut rng = rng::rng_from(seed, &[rng::stream::INSTANCE]);
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let mut demand = vec![0u32; n];
    for d in demand.iter_mut().skip(1) {
        *d = rng.gen_range(1..=9);
    }
    let dist = coord_matrix(&coords, DistanceRule::Exact);
    CvrpInstance::assemble(
        Some(format!("random-n{n}-s{seed}")),
        n,
        Some(coords),
        DistanceRule::Exact,
        dist,
        demand,
        random_capacity(n),
        Some(seed),
    )
}

/// Replaces every distance by `nint(factor · Δ)`. Coordinates are dropped
/// because the matrix no longer follows from them.
pub fn scale_distances(inst: &CvrpInstance, factor: u32) -> Result<CvrpInstance, InstanceError> {
    if factor < 1 {
        return Err(InstanceError::BadFactor);
    }
    if factor == 1 {
        return Ok(inst.clone());
    }
    let f = factor as f64;
    let dist = inst.dist.iter().map(|&d| nint(f * d)).collect();
    CvrpInstance::assemble(
        inst.name.clone(),
        inst.n,
        None,
        DistanceRule::Exact,
        dist,
        inst.demand.clone(),
        inst.capacity,
        inst.seed,
    )
}

// --- CVRPLIB -------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("unsupported EDGE_WEIGHT_TYPE `{0}`")]
    UnknownEdgeWeightType(String),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("malformed number `{0}`")]
    MalformedNumber(String),
    #[error("depot has demand {0}, expected 0")]
    DepotDemand(String),
    #[error("node id {0} outside 1..={1}")]
    NodeOutOfRange(usize, usize),
    #[error("node {0} listed twice")]
    Duplicate(usize),
    #[error("expected {expected} fields, got {got}")]
    FieldCount { expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

fn perr(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, ParseError> {
    tok.parse()
        .map_err(|_| perr(line, ParseErrorKind::MalformedNumber(tok.to_string())))
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Header,
    Coords,
    Demands,
    Depot,
}

/// Parses a TSPLIB-style CVRP file with EUC_2D distances. The depot is
/// moved to index 0 and the remaining nodes keep their relative order.
pub fn parse_cvrplib(text: &str) -> Result<CvrpInstance, ParseError> {
    let mut name = None;
    let mut dim: Option<(usize, usize)> = None;
    let mut cap: Option<(u32, usize)> = None;
    let mut ewt_seen = false;
    let mut coords: Vec<Option<[f64; 2]>> = Vec::new();
    let mut demand: Vec<Option<u32>> = Vec::new();
    let mut depots: Vec<(usize, usize)> = Vec::new();
    let mut seen = [false; 3];
    let mut section = Section::Header;
    let mut last_line = 0;
    let mut depot_done = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let upper = t.to_ascii_uppercase();
        if upper == "EOF" {
            break;
        }
        match upper.as_str() {
            "NODE_COORD_SECTION" | "DEMAND_SECTION" | "DEPOT_SECTION" => {
                let n = dim
                    .ok_or_else(|| perr(line, ParseErrorKind::Missing("DIMENSION before data sections")))?
                    .0;
                if coords.is_empty() {
                    coords = vec![None; n];
                    demand = vec![None; n];
                }
                section = match upper.as_str() {
                    "NODE_COORD_SECTION" => Section::Coords,
                    "DEMAND_SECTION" => Section::Demands,
                    _ => Section::Depot,
                };
                seen[section as usize - 1] = true;
                continue;
            }
            _ => {}
        }
        if section == Section::Header || t.contains(':') && !t.starts_with(|c: char| c.is_ascii_digit()) {
            let Some((k, v)) = t.split_once(':') else {
                return Err(perr(line, ParseErrorKind::Invalid(format!("expected `KEY : VALUE`, got `{t}`"))));
            };
            let v = v.trim();
            match k.trim().to_ascii_uppercase().as_str() {
                "NAME" => name = Some(v.to_string()),
                "DIMENSION" => dim = Some((num(v, line)?, line)),
                "CAPACITY" => cap = Some((num(v, line)?, line)),
                "EDGE_WEIGHT_TYPE" => {
                    if !v.eq_ignore_ascii_case("EUC_2D") {
                        return Err(perr(line, ParseErrorKind::UnknownEdgeWeightType(v.to_string())));
                    }
                    ewt_seen = true;
                }
                "TYPE" => {
                    if !v.eq_ignore_ascii_case("CVRP") {
                        return Err(perr(line, ParseErrorKind::Invalid(format!("TYPE `{v}` is not CVRP"))));
                    }
                }
                _ => {}
            }
            section = Section::Header;
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let n = coords.len();
        let node = |tok: &str| -> Result<usize, ParseError> {
            let id: i64 = num(tok, line)?;
            if id < 1 || id as usize > n {
                return Err(perr(line, ParseErrorKind::NodeOutOfRange(id.max(0) as usize, n)));
            }
            Ok(id as usize - 1)
        };
        match section {
            Section::Coords => {
                if toks.len() != 3 {
                    return Err(perr(line, ParseErrorKind::FieldCount { expected: 3, got: toks.len() }));
                }
                let i = node(toks[0])?;
                if coords[i].is_some() {
                    return Err(perr(line, ParseErrorKind::Duplicate(i + 1)));
                }
                let x: f64 = num(toks[1], line)?;
                let y: f64 = num(toks[2], line)?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(perr(line, ParseErrorKind::MalformedNumber(t.to_string())));
                }
                coords[i] = Some([x, y]);
            }
            Section::Demands => {
                if toks.len() != 2 {
                    return Err(perr(line, ParseErrorKind::FieldCount { expected: 2, got: toks.len() }));
                }
                let i = node(toks[0])?;
                if demand[i].is_some() {
                    return Err(perr(line, ParseErrorKind::Duplicate(i + 1)));
                }
                demand[i] = Some(num(toks[1], line)?);
            }
            Section::Depot => {
                if depot_done {
                    return Err(perr(line, ParseErrorKind::Invalid("data after DEPOT_SECTION terminator".into())));
                }
                for tok in toks {
                    if tok == "-1" {
                        depot_done = true;
                    } else if depot_done {
                        return Err(perr(line, ParseErrorKind::Invalid("data after DEPOT_SECTION terminator".into())));
                    } else {
                        depots.push((node(tok)?, line));
                    }
                }
            }
            Section::Header => unreachable!(),
        }
    }

    let end = last_line + 1;
    let (n, dim_line) = dim.ok_or_else(|| perr(end, ParseErrorKind::Missing("DIMENSION")))?;
    let (capacity, cap_line) = cap.ok_or_else(|| perr(end, ParseErrorKind::Missing("CAPACITY")))?;
    if !ewt_seen {
        return Err(perr(end, ParseErrorKind::Missing("EDGE_WEIGHT_TYPE")));
    }
    for (s, label) in seen.iter().zip(["NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"]) {
        if !s {
            return Err(perr(end, ParseErrorKind::Missing(label)));
        }
    }
    if n < 2 {
        return Err(perr(dim_line, ParseErrorKind::Invalid(format!("DIMENSION {n} is below 2"))));
    }
    if capacity == 0 {
        return Err(perr(cap_line, ParseErrorKind::Invalid("CAPACITY must be positive".into())));
    }
    let (depot, depot_line) = match depots.as_slice() {
        [] => return Err(perr(end, ParseErrorKind::Missing("depot id in DEPOT_SECTION"))),
        [d] => *d,
        [_, (_, l), ..] => return Err(perr(*l, ParseErrorKind::Invalid("multiple depots".into()))),
    };
    let mut order = vec![depot];
    order.extend((0..n).filter(|&i| i != depot));
    let mut pts = Vec::with_capacity(n);
    let mut dem = Vec::with_capacity(n);
    for &i in &order {
        pts.push(coords[i].ok_or_else(|| perr(end, ParseErrorKind::Missing("coordinates for a node")))?);
        dem.push(demand[i].ok_or_else(|| perr(end, ParseErrorKind::Missing("demand for a node")))?);
    }
    if dem[0] != 0 {
        return Err(perr(depot_line, ParseErrorKind::DepotDemand(dem[0].to_string())));
    }
    let inst = CvrpInstance::from_coords(pts, DistanceRule::Nint, dem, capacity)
        .map_err(|e| perr(end, ParseErrorKind::Invalid(e.to_string())))?;
    Ok(match name {
        Some(nm) => inst.with_name(nm),
        None => inst,
    })
}

pub fn read_cvrplib(path: &Path) -> Result<CvrpInstance, LoadError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_cvrplib(&text)?)
}

// --- JSON ----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    distance_rule: DistanceRule,
    demand: Vec<u32>,
    capacity: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl CvrpInstance {
    pub fn to_json(&self) -> String {
        let n = self.n;
        let rec = InstanceJson {
            name: self.name.clone(),
            n,
            coords: self.coords.clone(),
            distance_rule: self.rule,
            demand: self.demand.clone(),
            capacity: self.capacity,
            dist: Some(self.dist.chunks(n).map(|r| r.to_vec()).collect()),
            metric: Some(self.metric),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&rec).expect("instance serializes")
    }

    /// Reads the native format. `dist` is recomputed from `coords` when
    /// absent; an explicit `metric: true` is checked, not trusted.
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let rec: InstanceJson = serde_json::from_str(text)?;
        let dist = match (rec.dist, &rec.coords) {
            (Some(d), _) => {
                if d.len() != rec.n || d.iter().any(|r| r.len() != rec.n) {
                    return Err(InstanceError::Length {
                        what: "distance entries",
                        expected: rec.n * rec.n,
                        got: d.iter().map(Vec::len).sum(),
                    }
                    .into());
                }
                d.into_iter().flatten().collect()
            }
            (None, Some(c)) => {
                if c.len() != rec.n {
                    return Err(InstanceError::Length {
                        what: "coordinates",
                        expected: rec.n,
                        got: c.len(),
                    }
                    .into());
                }
                coord_matrix(c, rec.distance_rule)
            }
            (None, None) => return Err(InstanceError::NoDistances.into()),
        };
        let inst = Self::assemble(
            rec.name,
            rec.n,
            rec.coords,
            rec.distance_rule,
            dist,
            rec.demand,
            rec.capacity,
            rec.seed,
        )?;
        if rec.metric == Some(true) && !inst.metric {
            let (i, j, k) = inst.triangle_violation().expect("flag computed from the same check");
            return Err(InstanceError::NotMetric(i, j, k).into());
        }
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Ok(parse_cvrplib(&text)?)
        }
    }
}

impl fmt::Display for CvrpInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (n={}, Q={}, total demand {})",
            self.name.as_deref().unwrap_or("unnamed"),
            self.n,
            self.capacity,
            self.total_demand()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_brackets() {
        assert_eq!(random_capacity(11), 20);
        assert_eq!(random_capacity(12), 30);
        assert_eq!(random_capacity(21), 30);
        assert_eq!(random_capacity(22), 40);
        assert_eq!(random_capacity(51), 40);
    }

    #[test]
    fn nint_rounds_half_away_from_zero() {
        assert_eq!(nint(2.5), 3.0);
        assert_eq!(nint(-2.5), -3.0);
        assert_eq!(nint(1234.49), 1234.0);
    }

    #[test]
    fn rejects_unservable_and_bad_depot() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(
            CvrpInstance::from_matrix(d.clone(), vec![0, 5], 4),
            Err(InstanceError::Unservable { city: 1, .. })
        ));
        assert_eq!(
            CvrpInstance::from_matrix(d, vec![1, 1], 4),
            Err(InstanceError::DepotDemand(1))
        );
    }

    #[test]
    fn asymmetric_matrix_accepted() {
        let d = vec![vec![0.0, 1.0, 2.0], vec![3.0, 0.0, 1.0], vec![1.0, 2.0, 0.0]];
        let inst = CvrpInstance::from_matrix(d, vec![0, 1, 1], 2).unwrap();
        assert_eq!(inst.dist(1, 0), 3.0);
        assert!(!inst.is_metric());
    }

    #[test]
    fn parse_errors_name_their_line() {
        let base = "NAME : t\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\n\
                    NODE_COORD_SECTION\n1 0 0\n2 3 4\nDEMAND_SECTION\n1 0\n2 5\nDEPOT_SECTION\n1\n-1\nEOF\n";
        let inst = parse_cvrplib(base).unwrap();
        assert_eq!(inst.dist(0, 1), 5.0);

        let e = parse_cvrplib(&base.replace("EUC_2D", "GEO")).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(matches!(e.kind, ParseErrorKind::UnknownEdgeWeightType(_)));

        let e = parse_cvrplib(&base.replace("2 3 4", "2 3 x4")).unwrap_err();
        assert_eq!((e.line, e.kind), (8, ParseErrorKind::MalformedNumber("x4".into())));

        let e = parse_cvrplib(&base.replace("1 0\n2 5", "1 2\n2 5")).unwrap_err();
        assert_eq!(e.line, 13);
        assert!(matches!(e.kind, ParseErrorKind::DepotDemand(_)));

        let e = parse_cvrplib(&base.replace("DEMAND_SECTION\n1 0\n2 5\n", "")).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Missing("DEMAND_SECTION"));
    }
}
