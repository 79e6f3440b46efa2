//! Domain types shared by ingest, geometry, imputation and evaluation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("station id must not be empty")]
    EmptyStationId,
    #[error("station {station_id}: coordinate out of range (lon {longitude}, lat {latitude})")]
    CoordinateOutOfRange {
        station_id: String,
        longitude: f64,
        latitude: f64,
    },
    #[error("cadence must be a positive number of seconds dividing one day, got {0}s")]
    InvalidCadence(i64),
    #[error("cannot parse cadence {0:?}")]
    UnparseableCadence(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

/// Observed quantity. Temperature is in °C, rainfall in mm per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Temperature,
    Rainfall,
}

impl Variable {
    pub const ALL: [Variable; 2] = [Variable::Temperature, Variable::Rainfall];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Temperature => "temperature",
            Variable::Rainfall => "rainfall",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Variable::Temperature => "degC",
            Variable::Rainfall => "mm",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temperature" => Ok(Variable::Temperature),
            "rainfall" => Ok(Variable::Rainfall),
            other => Err(ModelError::UnknownVariable(other.to_string())),
        }
    }
}

/// Fixed sampling interval. Always a whole number of seconds that divides a day,
/// so every calendar day holds the same number of slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cadence(u32);

impl Cadence {
    pub const SECONDS_PER_DAY: u32 = 86_400;

    pub fn from_seconds(seconds: i64) -> Result<Self, ModelError> {
        if seconds <= 0 || seconds > Self::SECONDS_PER_DAY as i64 || Self::SECONDS_PER_DAY as i64 % seconds != 0 {
            return Err(ModelError::InvalidCadence(seconds));
        }
        Ok(Cadence(seconds as u32))
    }

    pub fn from_minutes(minutes: i64) -> Result<Self, ModelError> {
        Self::from_seconds(minutes.saturating_mul(60))
    }

    pub fn seconds(self) -> u32 {
        self.0
    }

    pub fn minutes(self) -> f64 {
        self.0 as f64 / 60.0
    }

    pub fn slots_per_day(self) -> u32 {
        Self::SECONDS_PER_DAY / self.0
    }

    pub fn duration(self) -> Duration {
        Duration::seconds(self.0 as i64)
    }
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence(15 * 60)
    }
}

impl fmt::Display for Cadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 3600 == 0 {
            write!(f, "{}h", self.0 / 3600)
        } else if self.0 % 60 == 0 {
            write!(f, "{}m", self.0 / 60)
        } else {
            write!(f, "{}s", self.0)
        }
    }
}

impl FromStr for Cadence {
    type Err = ModelError;

    /// Accepts `15m`, `1h`, `900s`, or a bare number of minutes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ModelError::UnparseableCadence(s.to_string());
        let (digits, scale) = match s.chars().last() {
            Some('s') => (&s[..s.len() - 1], 1),
            Some('m') => (&s[..s.len() - 1], 60),
            Some('h') => (&s[..s.len() - 1], 3600),
            Some(c) if c.is_ascii_digit() => (s, 60),
            _ => return Err(bad()),
        };
        let n: i64 = digits.parse().map_err(|_| bad())?;
        Self::from_seconds(n.checked_mul(scale).ok_or_else(bad)?)
    }
}

impl Serialize for Cadence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Identity and position of one station.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationMeta {
    pub station_id: String,
    pub longitude: f64,
    pub latitude: f64,
    pub label: Option<String>,
}

impl StationMeta {
    pub fn new(
        station_id: impl Into<String>,
        longitude: f64,
        latitude: f64,
        label: Option<String>,
    ) -> Result<Self, ModelError> {
        let station_id = station_id.into();
        if station_id.is_empty() {
            return Err(ModelError::EmptyStationId);
        }
        if !(-180.0..=180.0).contains(&longitude) || !(-90.0..=90.0).contains(&latitude) {
            return Err(ModelError::CoordinateOutOfRange {
                station_id,
                longitude,
                latitude,
            });
        }
        Ok(StationMeta {
            station_id,
            longitude,
            latitude,
            label,
        })
    }

    pub fn position(&self) -> LonLat {
        LonLat::new(self.longitude, self.latitude)
    }
}

/// A point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }
}

/// Observations of one variable at one station on a fixed cadence grid.
///
/// Slot `i` is the measurement at `start + i * cadence`. Missing values are
/// `None`; the subset of missing slots that arrived as an explicit `null`
/// marker is tracked separately so validation can count both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries<T> {
    station_id: String,
    variable: Variable,
    start: DateTime<Utc>,
    cadence: Cadence,
    slots: Vec<Option<T>>,
    nulls: BTreeSet<usize>,
}

impl<T: Scalar> StationSeries<T> {
    pub fn new(
        station_id: impl Into<String>,
        variable: Variable,
        start: DateTime<Utc>,
        cadence: Cadence,
        slots: Vec<Option<T>>,
    ) -> Self {
        StationSeries {
            station_id: station_id.into(),
            variable,
            start,
            cadence,
            slots,
            nulls: BTreeSet::new(),
        }
    }

    /// Marks the given slots as explicit nulls. Indices of present or
    /// out-of-range slots are ignored.
    pub fn with_nulls(mut self, nulls: impl IntoIterator<Item = usize>) -> Self {
        let len = self.slots.len();
        let slots = &self.slots;
        self.nulls = nulls
            .into_iter()
            .filter(|&i| i < len && slots[i].is_none())
            .collect();
        self
    }

    /// Same identity and grid, new values. Null markers survive only where
    /// the slot is still missing.
    pub fn with_slots(&self, slots: Vec<Option<T>>) -> Self {
        let nulls = self
            .nulls
            .iter()
            .copied()
            .filter(|&i| i < slots.len() && slots[i].is_none())
            .collect();
        StationSeries {
            station_id: self.station_id.clone(),
            variable: self.variable,
            start: self.start,
            cadence: self.cadence,
            slots,
            nulls,
        }
    }

    /// Sub-series over `range`, re-anchored at the first slot of the range.
    pub fn window(&self, range: std::ops::Range<usize>) -> Self {
        let start = self.timestamp(range.start);
        let nulls = self
            .nulls
            .range(range.clone())
            .map(|&i| i - range.start)
            .collect();
        StationSeries {
            station_id: self.station_id.clone(),
            variable: self.variable,
            start,
            cadence: self.cadence,
            slots: self.slots[range].to_vec(),
            nulls,
        }
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn cadence(&self) -> Cadence {
        self.cadence
    }

    pub fn slots(&self) -> &[Option<T>] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<T> {
        self.slots.get(slot).copied().flatten()
    }

    pub fn is_null(&self, slot: usize) -> bool {
        self.nulls.contains(&slot)
    }

    pub fn null_slots(&self) -> &BTreeSet<usize> {
        &self.nulls
    }

    pub fn timestamp(&self, slot: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(slot as i64 * self.cadence.seconds() as i64)
    }

    pub fn present_count(&self) -> usize {
        self.slots.iter().filter(|v| v.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.slots.len() - self.present_count()
    }

    /// Present values in slot order.
    pub fn present_values(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    /// Shift `d` such that slot `i` of `self` and slot `i + d` of `other`
    /// share a timestamp. `None` when the two grids do not line up.
    pub fn grid_offset<U: Scalar>(&self, other: &StationSeries<U>) -> Option<i64> {
        if self.cadence != other.cadence {
            return None;
        }
        let secs = (self.start - other.start).num_seconds();
        let step = self.cadence.seconds() as i64;
        (secs % step == 0).then_some(secs / step)
    }

    /// Value of `other` at the timestamp of slot `slot` of `self`.
    pub fn aligned_value(other: &StationSeries<T>, offset: i64, slot: usize) -> Option<T> {
        let j = slot as i64 + offset;
        if j < 0 {
            return None;
        }
        other.get(j as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapClass {
    Short,
    Long,
}

impl GapClass {
    /// Short iff the gap spans strictly less than one hour.
    pub fn classify(length: usize, cadence: Cadence) -> Self {
        if (length as u64) * (cadence.seconds() as u64) < 3600 {
            GapClass::Short
        } else {
            GapClass::Long
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GapClass::Short => "short",
            GapClass::Long => "long",
        }
    }
}

/// Maximal run of consecutive missing slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GapSpan {
    pub first_slot: usize,
    pub length: usize,
    pub class: GapClass,
}

impl GapSpan {
    pub fn slots(&self) -> std::ops::Range<usize> {
        self.first_slot..self.first_slot + self.length
    }
}

/// One ranked neighbour of a target station.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbour<T> {
    pub meta: StationMeta,
    pub distance_km: f64,
    /// (Δlon, Δlat) of the neighbour relative to the target, in degrees.
    pub offset: (f64, f64),
    /// Mean of the target over the slots where both stations are present.
    pub target_mean: T,
    /// Mean of the neighbour over the same slots.
    pub neighbour_mean: T,
}

impl<T: Scalar> Neighbour<T> {
    /// Squared norm of the coordinate offset.
    pub fn offset_sq(&self) -> f64 {
        self.offset.0 * self.offset.0 + self.offset.1 * self.offset.1
    }
}

/// Target station plus its ranked neighbours for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourSet<T> {
    pub target: StationMeta,
    pub variable: Variable,
    pub neighbours: Vec<Neighbour<T>>,
    /// Candidates dropped because they share no present slot with the target.
    pub excluded: Vec<String>,
}

impl<T> NeighbourSet<T> {
    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.neighbours.iter().map(|n| n.meta.station_id.as_str())
    }
}

/// Estimator families. `LinearInterp` only applies to short gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "linear")]
    LinearInterp,
    #[serde(rename = "nr")]
    Nr,
    #[serde(rename = "gc")]
    Gc,
    #[serde(rename = "nrgc")]
    Nrgc,
    #[serde(rename = "nn")]
    Nn,
}

impl MethodTag {
    /// Methods usable on long gaps, in report order.
    pub const NEIGHBOUR_METHODS: [MethodTag; 4] =
        [MethodTag::Nr, MethodTag::Gc, MethodTag::Nrgc, MethodTag::Nn];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::LinearInterp => "linear",
            MethodTag::Nr => "nr",
            MethodTag::Gc => "gc",
            MethodTag::Nrgc => "nrgc",
            MethodTag::Nn => "nn",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(MethodTag::LinearInterp),
            "nr" => Ok(MethodTag::Nr),
            "gc" => Ok(MethodTag::Gc),
            "nrgc" => Ok(MethodTag::Nrgc),
            "nn" => Ok(MethodTag::Nn),
            _ => Err(ModelError::UnknownMethod(s.to_string())),
        }
    }
}

/// What actually produced a filled value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FillMethod {
    #[serde(rename = "linear")]
    LinearInterp,
    #[serde(rename = "nr")]
    Nr,
    #[serde(rename = "gc")]
    Gc,
    #[serde(rename = "nrgc")]
    Nrgc,
    #[serde(rename = "nn")]
    Nn,
    #[serde(rename = "long_term_mean")]
    LongTermMeanFallback,
}

impl FillMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FillMethod::LinearInterp => "linear",
            FillMethod::Nr => "nr",
            FillMethod::Gc => "gc",
            FillMethod::Nrgc => "nrgc",
            FillMethod::Nn => "nn",
            FillMethod::LongTermMeanFallback => "long_term_mean",
        }
    }
}

impl From<MethodTag> for FillMethod {
    fn from(m: MethodTag) -> Self {
        match m {
            MethodTag::LinearInterp => FillMethod::LinearInterp,
            MethodTag::Nr => FillMethod::Nr,
            MethodTag::Gc => FillMethod::Gc,
            MethodTag::Nrgc => FillMethod::Nrgc,
            MethodTag::Nn => FillMethod::Nn,
        }
    }
}

impl fmt::Display for FillMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A filled slot together with where the value came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedValue<T> {
    pub value: T,
    pub method: FillMethod,
    pub slot: usize,
    pub contributing_stations: Vec<String>,
    /// A negative rainfall estimate was raised to zero.
    pub clamped: bool,
    /// A neighbour sat at zero coordinate offset and its value was copied.
    pub coincident: bool,
}

impl<T: Scalar> ImputedValue<T> {
    pub(crate) fn new(value: T, method: FillMethod, slot: usize) -> Self {
        ImputedValue {
            value,
            method,
            slot,
            contributing_stations: Vec::new(),
            clamped: false,
            coincident: false,
        }
    }

    /// Applies the non-negativity constraint for rainfall.
    pub(crate) fn clamp_for(mut self, variable: Variable) -> Self {
        if variable == Variable::Rainfall && self.value < T::zero() {
            self.value = T::zero();
            self.clamped = true;
        }
        self
    }
}

/// Station metadata plus every series observed at those stations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub stations: Vec<StationMeta>,
    pub series: Vec<StationSeries<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn station(&self, id: &str) -> Option<&StationMeta> {
        self.stations.iter().find(|s| s.station_id == id)
    }

    pub fn series_for(&self, id: &str, variable: Variable) -> Option<&StationSeries<T>> {
        self.series
            .iter()
            .find(|s| s.station_id() == id && s.variable() == variable)
    }

    /// All series of one variable.
    pub fn of_variable(&self, variable: Variable) -> Vec<&StationSeries<T>> {
        self.series.iter().filter(|s| s.variable() == variable).collect()
    }
}
