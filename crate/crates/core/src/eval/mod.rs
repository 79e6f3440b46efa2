//! Mask-and-score benchmarking of the long-gap methods.
//!
//! For every (station, variable, level) cell a fraction of the present values
//! of the target is hidden, each method fills the hidden slots from the
//! untouched neighbour series, and the estimates are scored against the
//! held-out truth with RMSE. All methods of one cell see the same mask.

mod synth;

pub use synth::{synth_dataset, synth_with, SynthConfig};

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{build_neighbour_set, Ranking};
use crate::impute::{impute_long, AlignedNeighbours, LongGapInputs, MonthlyMeans, DEFAULT_NN_DEPTH};
use crate::model::{Dataset, MethodTag, StationMeta, StationSeries, Variable};
use crate::scalar::Scalar;

pub const DEFAULT_LEVELS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot mask level {level} of a series with {present} present values")]
    LevelInfeasible { level: f64, present: usize },
    #[error("rmse of an empty sequence")]
    EmptyInput,
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic dataset request: {0}")]
    InvalidSynth(String),
}

/// How artificial missingness is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Individual slots drawn uniformly without replacement.
    PointwiseRandom,
    /// Non-overlapping runs of the given length.
    BlockRandom(usize),
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::PointwiseRandom => f.write_str("point"),
            Pattern::BlockRandom(n) => write!(f, "block:{n}"),
        }
    }
}

impl FromStr for Pattern {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::InvalidConfig(format!("pattern {s:?}, expected point or block:N"));
        match s {
            "point" => Ok(Pattern::PointwiseRandom),
            _ => {
                let n = s.strip_prefix("block:").ok_or_else(bad)?;
                let n: usize = n.parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                Ok(Pattern::BlockRandom(n))
            }
        }
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn ser_display<D: fmt::Display, S: Serializer>(v: &D, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub levels: Vec<f64>,
    pub seed: u64,
    pub methods: Vec<MethodTag>,
    pub pattern: Pattern,
    pub neighbour_k: usize,
    pub nn_depth: usize,
    #[serde(serialize_with = "ser_display")]
    pub ranking: Ranking,
    /// Restrict targets to these station ids; all stations when `None`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    /// Masks are drawn independently per station.
    pub masking: &'static str,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            levels: DEFAULT_LEVELS.to_vec(),
            seed: 42,
            methods: MethodTag::NEIGHBOUR_METHODS.to_vec(),
            pattern: Pattern::PointwiseRandom,
            neighbour_k: 2,
            nn_depth: DEFAULT_NN_DEPTH,
            ranking: Ranking::Geometric,
            targets: None,
            masking: "per_station_independent",
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.levels.is_empty() {
            return bad("no missingness levels".into());
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return bad(format!("level {l} outside (0, 1)"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("levels must be strictly increasing".into());
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.methods.contains(&MethodTag::LinearInterp) {
            return bad("linear interpolation is not a neighbour method".into());
        }
        if self.neighbour_k == 0 || self.nn_depth == 0 {
            return bad("neighbour count and cascade depth must be at least 1".into());
        }
        if self.pattern == Pattern::BlockRandom(0) {
            return bad("block length must be at least 1".into());
        }
        Ok(())
    }
}

/// Seed of the RNG stream for one masked series.
fn stream_seed(seed: u64, station_id: &str, variable: Variable, level: f64, pattern: Pattern) -> u64 {
    let key = format!("{seed}|{station_id}|{variable}|{:016x}|{pattern}", level.to_bits());
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Hides `round(level * present)` present slots of `series`.
///
/// The draw depends only on `(seed, station, variable, level, pattern)`.
/// Returns the masked copy and the sorted hidden slot indices.
pub fn inject_missingness<T: Scalar>(
    series: &StationSeries<T>,
    level: f64,
    pattern: Pattern,
    seed: u64,
) -> Result<(StationSeries<T>, Vec<usize>), EvalError> {
    let present: Vec<usize> = series.present_values().map(|(i, _)| i).collect();
    let n = present.len();
    let infeasible = || EvalError::LevelInfeasible { level, present: n };
    if !(0.0..1.0).contains(&level) {
        return Err(infeasible());
    }
    if level == 0.0 {
        return Ok((series.clone(), Vec::new()));
    }
    if (n as f64) < (1.0 / level).ceil() {
        return Err(infeasible());
    }
    let m = (level * n as f64).round() as usize;
    if m >= n {
        return Err(infeasible());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, series.station_id(), series.variable(), level, pattern));
    let mut picked: Vec<usize> = match pattern {
        Pattern::PointwiseRandom => index::sample(&mut rng, n, m).into_iter().collect(),
        Pattern::BlockRandom(len) => {
            if len == 0 {
                return Err(infeasible());
            }
            let mut lengths = vec![len; m / len];
            if m % len > 0 {
                lengths.push(m % len);
            }
            lengths.shuffle(&mut rng);
            let blocks = lengths.len();
            // stars and bars: place `blocks` runs among `n - m` unmasked slots
            let mut pos: Vec<usize> = index::sample(&mut rng, n - m + blocks, blocks).into_iter().collect();
            pos.sort_unstable();
            let mut out = Vec::with_capacity(m);
            let mut before = 0;
            for (j, (p, l)) in pos.into_iter().zip(&lengths).enumerate() {
                let start = p - j + before;
                out.extend(start..start + l);
                before += l;
            }
            out
        }
    };
    picked.sort_unstable();
    let mask: Vec<usize> = picked.into_iter().map(|p| present[p]).collect();
    let mut slots = series.slots().to_vec();
    for &i in &mask {
        slots[i] = None;
    }
    Ok((series.with_slots(slots), mask))
}

/// Root mean square of `estimate - truth`.
pub fn rmse<T: Scalar>(pairs: &[(T, T)]) -> Result<T, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sum = pairs.iter().fold(T::zero(), |acc, &(e, t)| {
        let d = e - t;
        acc + d * d
    });
    Ok((sum / T::of(pairs.len() as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub station_id: String,
    pub variable: Variable,
    pub method: MethodTag,
    pub level: f64,
    /// `None` when no masked slot could be filled.
    pub rmse: Option<f64>,
    pub n_masked: usize,
    pub n_unfilled: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub cells: Vec<EvalCell>,
    pub version: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(["station_id", "variable", "method", "level", "rmse", "n_masked", "n_unfilled"])?;
        for c in &self.cells {
            wtr.write_record([
                c.station_id.clone(),
                c.variable.to_string(),
                c.method.to_string(),
                c.level.to_string(),
                c.rmse.map(|r| r.to_string()).unwrap_or_default(),
                c.n_masked.to_string(),
                c.n_unfilled.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Mean RMSE of one method over all scored cells of a variable.
    pub fn mean_rmse(&self, variable: Variable, method: MethodTag) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.variable == variable && c.method == method)
            .filter_map(|c| c.rmse)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean RMSE of one method for one (station, variable).
    pub fn station_mean_rmse(&self, station_id: &str, variable: Variable, method: MethodTag) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.station_id == station_id && c.variable == variable && c.method == method)
            .filter_map(|c| c.rmse)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Neighbour count used for a method: the cascade needs `nn_depth` stations
/// when that many exist.
pub(crate) fn neighbours_for(method: MethodTag, k: usize, nn_depth: usize, available: usize) -> usize {
    match method {
        MethodTag::Nn => k.max(nn_depth).min(available).max(1),
        _ => k,
    }
}

/// Outcome of filling a set of slots of one target with one method.
pub(crate) struct Scored<T> {
    pub pairs: Vec<(T, T)>,
    pub unfilled: usize,
    pub error: Option<String>,
}

/// Fills `slots` of `masked` with `method` and pairs estimates with `truth`.
pub(crate) fn score_method<T: Scalar>(
    method: MethodTag,
    target: &StationMeta,
    candidates: &[StationMeta],
    masked: &StationSeries<T>,
    truth: &StationSeries<T>,
    pool: &[&StationSeries<T>],
    slots: &[usize],
    config: &EvalConfig,
) -> Scored<T> {
    let fail = |e: String| Scored {
        pairs: Vec::new(),
        unfilled: slots.len(),
        error: Some(e),
    };
    let k = neighbours_for(method, config.neighbour_k, config.nn_depth, candidates.len());
    let ns = match build_neighbour_set(target, candidates, k, masked.variable(), pool, config.ranking) {
        Ok(ns) => ns,
        Err(e) => return fail(e.to_string()),
    };
    let aligned = match AlignedNeighbours::new(&ns, masked, pool) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    let long_term = MonthlyMeans::from_series(masked);
    let inputs = LongGapInputs {
        target: masked,
        neighbours: &aligned,
        long_term: &long_term,
        nn_depth: config.nn_depth,
    };
    let mut pairs = Vec::with_capacity(slots.len());
    let mut unfilled = 0;
    let mut error = None;
    for &slot in slots {
        match impute_long(method, &ns, slot, &inputs) {
            Ok(v) => pairs.push((v.value, truth.get(slot).expect("masked slot had a value"))),
            Err(e) => {
                unfilled += 1;
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    Scored { pairs, unfilled, error }
}

/// Runs every (station, variable, method, level) cell. Cells are independent
/// and evaluated in parallel; the report order is fixed by station id,
/// variable, method order in the config, then level.
pub fn run_benchmark<T: Scalar>(dataset: &Dataset<T>, config: &EvalConfig) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let mut targets: Vec<&StationMeta> = dataset
        .stations
        .iter()
        .filter(|s| config.targets.as_ref().is_none_or(|t| t.contains(&s.station_id)))
        .collect();
    targets.sort_by(|a, b| a.station_id.cmp(&b.station_id));

    let mut tasks = Vec::new();
    for t in &targets {
        for variable in Variable::ALL {
            if let Some(series) = dataset.series_for(&t.station_id, variable) {
                for &level in &config.levels {
                    tasks.push((*t, series, level));
                }
            }
        }
    }

    let cells: Vec<Vec<EvalCell>> = tasks
        .par_iter()
        .map(|&(target, truth, level)| bench_cell(dataset, config, target, truth, level))
        .collect();

    let mut cells: Vec<EvalCell> = cells.into_iter().flatten().collect();
    let method_rank = |m: MethodTag| config.methods.iter().position(|&x| x == m);
    cells.sort_by(|a, b| {
        a.station_id
            .cmp(&b.station_id)
            .then(a.variable.cmp(&b.variable))
            .then(method_rank(a.method).cmp(&method_rank(b.method)))
            .then(a.level.total_cmp(&b.level))
    });
    Ok(EvalReport {
        config: config.clone(),
        cells,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn bench_cell<T: Scalar>(
    dataset: &Dataset<T>,
    config: &EvalConfig,
    target: &StationMeta,
    truth: &StationSeries<T>,
    level: f64,
) -> Vec<EvalCell> {
    let variable = truth.variable();
    let cell = |method, rmse, n_masked, n_unfilled, error| EvalCell {
        station_id: target.station_id.clone(),
        variable,
        method,
        level,
        rmse,
        n_masked,
        n_unfilled,
        error,
    };
    let (masked, mask) = match inject_missingness(truth, level, config.pattern, config.seed) {
        Ok(m) => m,
        Err(e) => {
            return config
                .methods
                .iter()
                .map(|&m| cell(m, None, 0, 0, Some(e.to_string())))
                .collect()
        }
    };
    let candidates: Vec<StationMeta> = dataset
        .stations
        .iter()
        .filter(|s| s.station_id != target.station_id && dataset.series_for(&s.station_id, variable).is_some())
        .cloned()
        .collect();
    let pool: Vec<&StationSeries<T>> = dataset
        .of_variable(variable)
        .into_iter()
        .map(|s| if s.station_id() == target.station_id { &masked } else { s })
        .collect();

    config
        .methods
        .iter()
        .map(|&method| {
            let scored = score_method(method, target, &candidates, &masked, truth, &pool, &mask, config);
            let rmse = rmse(&scored.pairs).ok().map(Scalar::as_f64);
            cell(method, rmse, mask.len(), scored.unfilled, scored.error)
        })
        .collect()
}

/// Distinct slot indices of a mask, for callers that need set semantics.
pub fn mask_set(mask: &[usize]) -> BTreeSet<usize> {
    mask.iter().copied().collect()
}
