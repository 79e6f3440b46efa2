//! End-to-end fill workflow:
//!
//! 1. ingest and validate,
//! 2. detect gaps,
//! 3. fill short interior gaps by linear interpolation,
//! 4. fill long gaps (and short gaps touching a series edge) with a
//!    neighbour method,
//! 5. when no method is configured, pick one per (station, variable) by
//!    benchmarking on the longest fully present window,
//! 6. write the filled observations plus a provenance sidecar.
//!
//! Neighbour methods only ever read the original neighbour values, never
//! values imputed during the same run.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{neighbours_for, run_benchmark, EvalConfig, EvalError};
use crate::geo::{build_neighbour_set, GeoError, Ranking};
use crate::impute::{
    impute_long, linear_interpolate, AlignedNeighbours, ImputeError, LongGapInputs, MonthlyMeans,
    DEFAULT_NN_DEPTH,
};
use crate::ingest::{
    detect_gaps, format_timestamp, parse_observations, parse_station_meta, validate, write_observations,
    Bounds, IngestError, ValidationReport,
};
use crate::model::{Cadence, Dataset, GapClass, ImputedValue, MethodTag, StationMeta, StationSeries, Variable};
use crate::scalar::Scalar;

/// Method used when auto-selection has nothing to benchmark on.
pub const FALLBACK_METHOD: MethodTag = MethodTag::Nrgc;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),
    #[error("linear interpolation cannot be the long-gap method")]
    LinearForLongGaps,
    #[error("neighbour count must be at least 1")]
    ZeroNeighbours,
    #[error("station {0} has observations but no metadata row")]
    UnknownStation(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Knobs for the in-memory fill.
#[derive(Debug, Clone, PartialEq)]
pub struct FillOptions {
    pub neighbour_k: usize,
    /// `None` selects a method per (station, variable) by benchmark.
    pub long_gap_method: Option<MethodTag>,
    pub nn_depth: usize,
    pub ranking: Ranking,
    pub bounds: Bounds,
    pub treat_out_of_bounds_as_missing: bool,
    /// Seed of the auto-selection benchmark.
    pub seed: u64,
}

impl Default for FillOptions {
    fn default() -> Self {
        FillOptions {
            neighbour_k: 2,
            long_gap_method: None,
            nn_depth: DEFAULT_NN_DEPTH,
            ranking: Ranking::Geometric,
            bounds: Bounds::default(),
            treat_out_of_bounds_as_missing: false,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub observations: PathBuf,
    pub stations: PathBuf,
    pub cadence: Cadence,
    pub fill: FillOptions,
    pub output: PathBuf,
    pub provenance: PathBuf,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.fill.long_gap_method == Some(MethodTag::LinearInterp) {
            return Err(PipelineError::LinearForLongGaps);
        }
        if self.fill.neighbour_k == 0 || self.fill.nn_depth == 0 {
            return Err(PipelineError::ZeroNeighbours);
        }
        for p in [&self.observations, &self.stations] {
            if !p.exists() {
                return Err(PipelineError::MissingInput(p.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBasis {
    Configured,
    Benchmark,
    /// Nothing could be benchmarked; the default method was used.
    Fallback,
}

/// Long-gap method chosen for one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSelection {
    pub station_id: String,
    pub variable: Variable,
    pub method: MethodTag,
    pub basis: SelectionBasis,
    /// Length of the fully present window the benchmark ran on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_slots: Option<usize>,
    /// Mean RMSE across levels per method, for benchmark selections.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub mean_rmse: BTreeMap<String, f64>,
}

/// A run of slots still missing after both fill passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualGap {
    pub station_id: String,
    pub variable: Variable,
    pub first_slot: usize,
    pub length: usize,
    pub start: String,
    pub reason: String,
}

/// One filled slot, as written to the provenance sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceRow<T> {
    pub station_id: String,
    pub variable: Variable,
    pub timestamp: String,
    pub imputed: ImputedValue<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillOutcome<T> {
    pub dataset: Dataset<T>,
    pub provenance: Vec<ProvenanceRow<T>>,
    pub selections: Vec<MethodSelection>,
    pub residual: Vec<ResidualGap>,
}

impl<T> FillOutcome<T> {
    pub fn is_clean(&self) -> bool {
        self.residual.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub validation: ValidationReport,
    pub selections: Vec<MethodSelection>,
    pub filled_short: usize,
    pub filled_long: usize,
    pub residual_gaps: Vec<ResidualGap>,
    pub clean: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Blanks out-of-bounds values so the fill treats them as gaps.
/// Every observed station must have a metadata row.
pub fn check_stations<T: Scalar>(dataset: &Dataset<T>) -> Result<(), PipelineError> {
    match dataset.series.iter().find(|s| dataset.station(s.station_id()).is_none()) {
        Some(s) => Err(PipelineError::UnknownStation(s.station_id().to_string())),
        None => Ok(()),
    }
}

pub fn drop_out_of_bounds<T: Scalar>(dataset: &Dataset<T>, bounds: &Bounds) -> Dataset<T> {
    let series = dataset
        .series
        .iter()
        .map(|s| {
            let slots = s
                .slots()
                .iter()
                .map(|v| v.filter(|&x| bounds.contains(s.variable(), x)))
                .collect();
            s.with_slots(slots)
        })
        .collect();
    Dataset {
        stations: dataset.stations.clone(),
        series,
    }
}

/// Fills every gap of every series that the configured methods can fill.
pub fn fill_dataset<T: Scalar>(dataset: &Dataset<T>, options: &FillOptions) -> FillOutcome<T> {
    let original = if options.treat_out_of_bounds_as_missing {
        drop_out_of_bounds(dataset, &options.bounds)
    } else {
        dataset.clone()
    };

    let per_series: Vec<SeriesFill<T>> = original
        .series
        .par_iter()
        .map(|s| fill_series(&original, s, options))
        .collect();

    let mut out = FillOutcome {
        dataset: Dataset {
            stations: original.stations.clone(),
            series: Vec::with_capacity(per_series.len()),
        },
        provenance: Vec::new(),
        selections: Vec::new(),
        residual: Vec::new(),
    };
    for f in per_series {
        out.dataset.series.push(f.series);
        out.provenance.extend(f.provenance);
        out.selections.extend(f.selection);
        out.residual.extend(f.residual);
    }
    out
}

struct SeriesFill<T> {
    series: StationSeries<T>,
    provenance: Vec<ProvenanceRow<T>>,
    selection: Option<MethodSelection>,
    residual: Vec<ResidualGap>,
}

fn fill_series<T: Scalar>(original: &Dataset<T>, target: &StationSeries<T>, options: &FillOptions) -> SeriesFill<T> {
    let gaps = detect_gaps(target);
    let mut slots = target.slots().to_vec();
    let mut filled: Vec<ImputedValue<T>> = Vec::new();
    let mut long_slots: Vec<usize> = Vec::new();
    let mut reasons: HashMap<usize, String> = HashMap::new();

    for gap in &gaps {
        let interior = gap.class == GapClass::Short
            && gap.first_slot > 0
            && gap.first_slot + gap.length < target.len();
        match interior.then(|| linear_interpolate(target, gap)) {
            Some(Ok(values)) => filled.extend(values),
            _ => long_slots.extend(gap.slots()),
        }
    }

    let mut selection = None;
    if !long_slots.is_empty() {
        let (method, sel) = choose_method(original, target, options);
        selection = Some(sel);
        match long_gap_filler(original, target, method, options) {
            Ok(filler) => {
                for &slot in &long_slots {
                    match filler.fill(slot) {
                        Ok(v) => filled.push(v),
                        Err(e) => {
                            reasons.insert(slot, e.to_string());
                        }
                    }
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for &slot in &long_slots {
                    reasons.insert(slot, msg.clone());
                }
            }
        }
    }

    filled.sort_by_key(|v| v.slot);
    for v in &filled {
        slots[v.slot] = Some(v.value);
    }
    let series = target.with_slots(slots);
    let residual = detect_gaps(&series)
        .into_iter()
        .map(|g| ResidualGap {
            station_id: target.station_id().to_string(),
            variable: target.variable(),
            first_slot: g.first_slot,
            length: g.length,
            start: format_timestamp(target.timestamp(g.first_slot)),
            reason: reasons
                .get(&g.first_slot)
                .cloned()
                .unwrap_or_else(|| "not filled".to_string()),
        })
        .collect();
    let provenance = filled
        .into_iter()
        .map(|imputed| ProvenanceRow {
            station_id: target.station_id().to_string(),
            variable: target.variable(),
            timestamp: format_timestamp(target.timestamp(imputed.slot)),
            imputed,
        })
        .collect();
    SeriesFill {
        series,
        provenance,
        selection,
        residual,
    }
}

#[derive(Debug, Error)]
enum FillerError {
    #[error("station {0} has no metadata")]
    UnknownStation(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

struct LongGapFiller<'a, T> {
    method: MethodTag,
    ns: crate::model::NeighbourSet<T>,
    target: &'a StationSeries<T>,
    aligned: AlignedNeighbours<'a, T>,
    long_term: MonthlyMeans<T>,
    nn_depth: usize,
}

impl<T: Scalar> LongGapFiller<'_, T> {
    fn fill(&self, slot: usize) -> Result<ImputedValue<T>, ImputeError> {
        let inputs = LongGapInputs {
            target: self.target,
            neighbours: &self.aligned,
            long_term: &self.long_term,
            nn_depth: self.nn_depth,
        };
        impute_long(self.method, &self.ns, slot, &inputs)
    }
}

fn candidates_for<T: Scalar>(original: &Dataset<T>, target: &str, variable: Variable) -> Vec<StationMeta> {
    original
        .stations
        .iter()
        .filter(|s| s.station_id != target && original.series_for(&s.station_id, variable).is_some())
        .cloned()
        .collect()
}

fn long_gap_filler<'a, T: Scalar>(
    original: &'a Dataset<T>,
    target: &'a StationSeries<T>,
    method: MethodTag,
    options: &FillOptions,
) -> Result<LongGapFiller<'a, T>, FillerError> {
    let meta = original
        .station(target.station_id())
        .ok_or_else(|| FillerError::UnknownStation(target.station_id().to_string()))?;
    let candidates = candidates_for(original, target.station_id(), target.variable());
    let pool = original.of_variable(target.variable());
    let k = neighbours_for(method, options.neighbour_k, options.nn_depth, candidates.len());
    let ns = build_neighbour_set(meta, &candidates, k, target.variable(), &pool, options.ranking)?;
    let aligned = AlignedNeighbours::new(&ns, target, &pool)?;
    Ok(LongGapFiller {
        method,
        ns,
        target,
        aligned,
        long_term: MonthlyMeans::from_series(target),
        nn_depth: options.nn_depth,
    })
}

/// Longest run of present slots, as a slot range.
fn longest_present_window<T: Scalar>(s: &StationSeries<T>) -> Option<std::ops::Range<usize>> {
    let mut best: Option<std::ops::Range<usize>> = None;
    let mut start = None;
    for i in 0..=s.len() {
        let present = i < s.len() && s.slots()[i].is_some();
        match (present, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                if best.as_ref().is_none_or(|b| i - a > b.len()) {
                    best = Some(a..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

fn choose_method<T: Scalar>(
    original: &Dataset<T>,
    target: &StationSeries<T>,
    options: &FillOptions,
) -> (MethodTag, MethodSelection) {
    let mut sel = MethodSelection {
        station_id: target.station_id().to_string(),
        variable: target.variable(),
        method: FALLBACK_METHOD,
        basis: SelectionBasis::Fallback,
        window_slots: None,
        mean_rmse: BTreeMap::new(),
    };
    if let Some(m) = options.long_gap_method {
        sel.method = m;
        sel.basis = SelectionBasis::Configured;
        return (m, sel);
    }
    let Some(window) = longest_present_window(target) else {
        return (FALLBACK_METHOD, sel);
    };
    sel.window_slots = Some(window.len());
    if let Ok(scores) = benchmark_window(original, target, window, options) {
        sel.mean_rmse = scores.iter().map(|(m, r)| (m.to_string(), *r)).collect();
        if let Some(&(m, _)) = scores.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
            sel.method = m;
            sel.basis = SelectionBasis::Benchmark;
        }
    }
    (sel.method, sel)
}

/// Mean RMSE per method of a mask-and-score run on `window` of `target`.
fn benchmark_window<T: Scalar>(
    original: &Dataset<T>,
    target: &StationSeries<T>,
    window: std::ops::Range<usize>,
    options: &FillOptions,
) -> Result<Vec<(MethodTag, f64)>, EvalError> {
    let variable = target.variable();
    let mut series = vec![target.window(window)];
    series.extend(
        original
            .of_variable(variable)
            .into_iter()
            .filter(|s| s.station_id() != target.station_id())
            .cloned(),
    );
    let sub = Dataset {
        stations: original.stations.clone(),
        series,
    };
    let config = EvalConfig {
        seed: options.seed,
        neighbour_k: options.neighbour_k,
        nn_depth: options.nn_depth,
        ranking: options.ranking,
        targets: Some(vec![target.station_id().to_string()]),
        ..EvalConfig::default()
    };
    let report = run_benchmark(&sub, &config)?;
    Ok(config
        .methods
        .iter()
        .filter_map(|&m| {
            let cells: Vec<_> = report.cells.iter().filter(|c| c.method == m).collect();
            // a method must score every level to be eligible
            if cells.is_empty() || cells.iter().any(|c| c.rmse.is_none()) {
                return None;
            }
            let mean = cells.iter().filter_map(|c| c.rmse).sum::<f64>() / cells.len() as f64;
            Some((m, mean))
        })
        .collect())
}

pub const PROVENANCE_HEADER: [&str; 9] = [
    "station_id",
    "variable",
    "timestamp",
    "slot",
    "value",
    "method",
    "contributing_stations",
    "clamped",
    "coincident",
];

pub fn write_provenance<T: Scalar, W: Write>(rows: &[ProvenanceRow<T>], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(PROVENANCE_HEADER)?;
    for r in rows {
        let v = &r.imputed;
        wtr.write_record([
            r.station_id.clone(),
            r.variable.to_string(),
            r.timestamp.clone(),
            v.slot.to_string(),
            v.value.to_string(),
            v.method.to_string(),
            v.contributing_stations.join(";"),
            v.clamped.to_string(),
            v.coincident.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| PipelineError::Write {
            path: path.clone(),
            source,
        })
}

/// Runs the whole workflow on files and writes the filled dataset and the
/// provenance sidecar.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let stations = parse_station_meta(&config.stations)?;
    let series: Vec<StationSeries<f64>> = parse_observations(&config.observations, config.cadence)?;
    let validation = validate(&series, &config.fill.bounds);
    let dataset = Dataset { stations, series };
    check_stations(&dataset)?;
    let outcome = fill_dataset(&dataset, &config.fill);

    let mut out = create(&config.output)?;
    write_observations(&outcome.dataset.series, &mut out)?;
    out.flush().map_err(|source| PipelineError::Write {
        path: config.output.clone(),
        source,
    })?;
    let mut prov = create(&config.provenance)?;
    write_provenance(&outcome.provenance, &mut prov).map_err(IngestError::from)?;
    prov.flush().map_err(|source| PipelineError::Write {
        path: config.provenance.clone(),
        source,
    })?;

    let filled_short = outcome
        .provenance
        .iter()
        .filter(|r| r.imputed.method == crate::model::FillMethod::LinearInterp)
        .count();
    Ok(RunReport {
        validation,
        filled_long: outcome.provenance.len() - filled_short,
        filled_short,
        clean: outcome.is_clean(),
        residual_gaps: outcome.residual,
        selections: outcome.selections,
    })
}
