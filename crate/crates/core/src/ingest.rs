//! CSV ingestion, completeness validation and gap detection.
//!
//! Two file layouts are understood:
//!
//! * station metadata, header `station_id,longitude,latitude,label`
//! * observations in long form, header `station_id,timestamp,variable,value`,
//!   timestamps `YYYY-MM-DDTHH:MM:SSZ`, value either a decimal, empty
//!   (missing) or the literal `null`.
//!
//! Observations are placed on a cadence grid anchored at midnight of the
//! earliest timestamp of each (station, variable) pair. Rows off that grid are
//! rejected rather than snapped.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::model::{Cadence, GapClass, GapSpan, ModelError, StationMeta, StationSeries, Variable};
use crate::scalar::Scalar;

pub const META_HEADER: [&str; 4] = ["station_id", "longitude", "latitude", "label"];
pub const OBS_HEADER: [&str; 4] = ["station_id", "timestamp", "variable", "value"];
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: unexpected header {found:?}, expected {expected:?}")]
    BadHeader {
        line: u64,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: duplicate station id {station_id:?}")]
    DuplicateStationId { line: u64, station_id: String },
    #[error("line {line}: {source}")]
    CoordinateOutOfRange {
        line: u64,
        #[source]
        source: ModelError,
    },
    #[error("line {line}: timestamp {timestamp} is not on the {cadence} grid")]
    OffGridTimestamp {
        line: u64,
        timestamp: String,
        cadence: Cadence,
    },
    #[error("line {line}: second row for {station_id}/{variable} at {timestamp}")]
    DuplicateSlot {
        line: u64,
        station_id: String,
        variable: Variable,
        timestamp: String,
    },
    #[error("line {line}: unknown variable {value:?}")]
    UnknownVariable { line: u64, value: String },
    #[error("line {line}: cannot parse value {value:?}")]
    UnparseableValue { line: u64, value: String },
    #[error("bounds for {variable}: min {min} must be below max {max}")]
    InvalidBounds { variable: Variable, min: f64, max: f64 },
    #[error("cannot parse bounds {0:?}, expected variable=min:max")]
    UnparseableBounds(String),
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            line: 1,
            found: found.iter().map(str::to_string).collect(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

/// Parses a station metadata file.
pub fn parse_station_meta(path: impl AsRef<Path>) -> Result<Vec<StationMeta>, IngestError> {
    read_station_meta(open(path.as_ref())?)
}

pub fn read_station_meta<R: Read>(r: R) -> Result<Vec<StationMeta>, IngestError> {
    let mut rdr = reader(r);
    check_header(rdr.headers()?, &META_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != META_HEADER.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let coord = |i: usize, name: &str| -> Result<f64, IngestError> {
            record[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::MalformedRow {
                    line,
                    reason: format!("{name} {:?} is not a number", &record[i]),
                })
        };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty station_id".into(),
            });
        }
        let (lon, lat) = (coord(1, "longitude")?, coord(2, "latitude")?);
        let label = (!record[3].is_empty()).then(|| record[3].to_string());
        let meta = StationMeta::new(id.clone(), lon, lat, label)
            .map_err(|source| IngestError::CoordinateOutOfRange { line, source })?;
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateStationId { line, station_id: id });
        }
        out.push(meta);
    }
    Ok(out)
}

pub fn write_station_meta<W: Write>(stations: &[StationMeta], w: W) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(META_HEADER)?;
    for s in stations {
        wtr.write_record([
            s.station_id.as_str(),
            &s.longitude.to_string(),
            &s.latitude.to_string(),
            s.label.as_deref().unwrap_or(""),
        ])?;
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

enum Cell<T> {
    Value(T),
    Null,
    Empty,
}

struct Row<T> {
    line: u64,
    ts: DateTime<Utc>,
    cell: Cell<T>,
}

/// Parses an observations file into one series per (station, variable),
/// ordered by station id then variable.
pub fn parse_observations<T: Scalar>(
    path: impl AsRef<Path>,
    cadence: Cadence,
) -> Result<Vec<StationSeries<T>>, IngestError> {
    read_observations(open(path.as_ref())?, cadence)
}

pub fn read_observations<T: Scalar, R: Read>(
    r: R,
    cadence: Cadence,
) -> Result<Vec<StationSeries<T>>, IngestError> {
    let mut rdr = reader(r);
    check_header(rdr.headers()?, &OBS_HEADER)?;

    let mut groups: BTreeMap<(String, Variable), Vec<Row<T>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != OBS_HEADER.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty station_id".into(),
            });
        }
        let ts = parse_timestamp(&record[1]).ok_or_else(|| IngestError::MalformedRow {
            line,
            reason: format!("timestamp {:?} is not YYYY-MM-DDTHH:MM:SSZ", &record[1]),
        })?;
        let variable = Variable::from_str(&record[2]).map_err(|_| IngestError::UnknownVariable {
            line,
            value: record[2].to_string(),
        })?;
        let cell = match &record[3] {
            "" => Cell::Empty,
            "null" => Cell::Null,
            raw => match raw.trim().parse::<T>() {
                Ok(v) if v.is_finite() => Cell::Value(v),
                _ => {
                    return Err(IngestError::UnparseableValue {
                        line,
                        value: raw.to_string(),
                    })
                }
            },
        };
        groups
            .entry((id.to_string(), variable))
            .or_default()
            .push(Row { line, ts, cell });
    }

    let step = cadence.seconds() as i64;
    let mut out = Vec::with_capacity(groups.len());
    for ((station_id, variable), mut rows) in groups {
        rows.sort_by_key(|r| r.line);
        let earliest = rows.iter().map(|r| r.ts).min().expect("group has a row");
        let anchor = earliest
            .date_naive()
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc();
        let mut placed: Vec<(usize, &Row<T>)> = Vec::with_capacity(rows.len());
        for row in &rows {
            let secs = (row.ts - anchor).num_seconds();
            if secs % step != 0 {
                return Err(IngestError::OffGridTimestamp {
                    line: row.line,
                    timestamp: format_timestamp(row.ts),
                    cadence,
                });
            }
            placed.push(((secs / step) as usize, row));
        }
        let len = placed.iter().map(|(i, _)| i + 1).max().unwrap_or(0);
        let mut slots = vec![None; len];
        let mut occupied = vec![false; len];
        let mut nulls = BTreeSet::new();
        for (i, row) in placed {
            if std::mem::replace(&mut occupied[i], true) {
                return Err(IngestError::DuplicateSlot {
                    line: row.line,
                    station_id,
                    variable,
                    timestamp: format_timestamp(row.ts),
                });
            }
            match row.cell {
                Cell::Value(v) => slots[i] = Some(v),
                Cell::Null => {
                    nulls.insert(i);
                }
                Cell::Empty => {}
            }
        }
        out.push(StationSeries::new(station_id, variable, anchor, cadence, slots).with_nulls(nulls));
    }
    Ok(out)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|t| t.and_utc())
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Writes every slot of every series, one row each: the value, `null` for
/// explicit nulls, or an empty field for other missing slots.
pub fn write_observations<T: Scalar, W: Write>(
    series: &[StationSeries<T>],
    w: W,
) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(OBS_HEADER)?;
    let mut value = String::new();
    for s in series {
        let variable = s.variable().as_str();
        for (i, slot) in s.slots().iter().enumerate() {
            value.clear();
            match slot {
                Some(v) => {
                    use std::fmt::Write as _;
                    write!(value, "{v}").expect("writing to a String");
                }
                None if s.is_null(i) => value.push_str("null"),
                None => {}
            }
            wtr.write_record([s.station_id(), &format_timestamp(s.timestamp(i)), variable, &value])?;
        }
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Inclusive plausibility range per variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub temperature: (f64, f64),
    pub rainfall: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            temperature: (-35.2, 60.0),
            rainfall: (0.0, 500.0),
        }
    }
}

impl Bounds {
    pub fn get(&self, variable: Variable) -> (f64, f64) {
        match variable {
            Variable::Temperature => self.temperature,
            Variable::Rainfall => self.rainfall,
        }
    }

    pub fn set(&mut self, variable: Variable, min: f64, max: f64) -> Result<(), IngestError> {
        if !(min < max) {
            return Err(IngestError::InvalidBounds { variable, min, max });
        }
        match variable {
            Variable::Temperature => self.temperature = (min, max),
            Variable::Rainfall => self.rainfall = (min, max),
        }
        Ok(())
    }

    pub fn contains<T: Scalar>(&self, variable: Variable, value: T) -> bool {
        let (lo, hi) = self.get(variable);
        let v = value.as_f64();
        lo <= v && v <= hi
    }

    /// Parses an override of the form `temperature=-35.2:60.0`.
    pub fn parse_override(spec: &str) -> Result<(Variable, f64, f64), IngestError> {
        let bad = || IngestError::UnparseableBounds(spec.to_string());
        let (var, range) = spec.split_once('=').ok_or_else(bad)?;
        let variable = Variable::from_str(var.trim()).map_err(|_| bad())?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Ok((variable, lo, hi))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecordCounts {
    pub expected_records: u64,
    pub present_records: u64,
    pub null_records: u64,
    pub missing_records: u64,
    pub out_of_bounds_records: u64,
    pub gap_histogram: BTreeMap<String, u64>,
}

impl RecordCounts {
    fn absorb(&mut self, other: &RecordCounts) {
        self.expected_records += other.expected_records;
        self.present_records += other.present_records;
        self.null_records += other.null_records;
        self.missing_records += other.missing_records;
        self.out_of_bounds_records += other.out_of_bounds_records;
        for (k, v) in &other.gap_histogram {
            *self.gap_histogram.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YearCounts {
    pub year: i32,
    pub days: u32,
    #[serde(flatten)]
    pub counts: RecordCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesValidation {
    pub station_id: String,
    pub variable: Variable,
    pub cadence: Cadence,
    pub totals: RecordCounts,
    pub years: Vec<YearCounts>,
}

/// Completeness and plausibility counts for a set of series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub bounds: Bounds,
    pub series: Vec<SeriesValidation>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Records one station should hold for `days` full days.
pub fn expected_records(days: u32, cadence: Cadence) -> u64 {
    days as u64 * cadence.slots_per_day() as u64
}

fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

/// Counts expected, present, null, missing and out-of-bounds records per
/// calendar year. Out-of-bounds values are counted, never removed.
pub fn validate<T: Scalar>(series: &[StationSeries<T>], bounds: &Bounds) -> ValidationReport {
    ValidationReport {
        bounds: *bounds,
        series: series.iter().map(|s| validate_series(s, bounds)).collect(),
    }
}

fn validate_series<T: Scalar>(s: &StationSeries<T>, bounds: &Bounds) -> SeriesValidation {
    let mut years: BTreeMap<i32, YearCounts> = BTreeMap::new();
    if !s.is_empty() {
        let first = s.start().date_naive();
        let last = s.timestamp(s.len() - 1).date_naive();
        for year in first.year()..=last.year() {
            let lo = if year == first.year() { first.ordinal() } else { 1 };
            let hi = if year == last.year() { last.ordinal() } else { days_in_year(year) };
            let days = hi - lo + 1;
            years.insert(
                year,
                YearCounts {
                    year,
                    days,
                    counts: RecordCounts {
                        expected_records: expected_records(days, s.cadence()),
                        ..Default::default()
                    },
                },
            );
        }
        for (i, slot) in s.slots().iter().enumerate() {
            let c = &mut years.get_mut(&s.timestamp(i).year()).expect("year in range").counts;
            match slot {
                Some(v) => {
                    c.present_records += 1;
                    if !bounds.contains(s.variable(), *v) {
                        c.out_of_bounds_records += 1;
                    }
                }
                None if s.is_null(i) => c.null_records += 1,
                None => {}
            }
        }
        for gap in detect_gaps(s) {
            let c = &mut years
                .get_mut(&s.timestamp(gap.first_slot).year())
                .expect("year in range")
                .counts;
            *c.gap_histogram.entry(gap.class.as_str().to_string()).or_default() += 1;
        }
        for y in years.values_mut() {
            let c = &mut y.counts;
            c.missing_records = c.expected_records - c.present_records - c.null_records;
        }
    }
    let mut totals = RecordCounts::default();
    for y in years.values() {
        totals.absorb(&y.counts);
    }
    SeriesValidation {
        station_id: s.station_id().to_string(),
        variable: s.variable(),
        cadence: s.cadence(),
        totals,
        years: years.into_values().collect(),
    }
}

/// Maximal runs of missing slots, in slot order.
pub fn detect_gaps<T: Scalar>(series: &StationSeries<T>) -> Vec<GapSpan> {
    let mut gaps = Vec::new();
    let mut run_start = None;
    let slots = series.slots();
    for i in 0..=slots.len() {
        let missing = i < slots.len() && slots[i].is_none();
        match (missing, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(first)) => {
                let length = i - first;
                gaps.push(GapSpan {
                    first_slot: first,
                    length,
                    class: GapClass::classify(length, series.cadence()),
                });
                run_start = None;
            }
            _ => {}
        }
    }
    gaps
}
