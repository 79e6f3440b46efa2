//! Fill methods: linear interpolation for short gaps and four neighbour-based
//! estimators (normal ratio, inverse squared coordinate offset, their product,
//! and a nearest-neighbour cascade) for long gaps.
//!
//! Every neighbour estimator takes the observations of the neighbours at the
//! target slot, aligned with `NeighbourSet::neighbours`. Neighbours without
//! a value at the slot are dropped and the estimator renormalises over the
//! rest.

use chrono::Datelike;
use thiserror::Error;

use crate::geo::GeoError;
use crate::model::{
    FillMethod, GapClass, GapSpan, ImputedValue, MethodTag, NeighbourSet, StationSeries,
};
use crate::scalar::Scalar;

/// Number of stations the nearest-neighbour cascade walks before falling
/// back to the long-term monthly mean.
pub const DEFAULT_NN_DEPTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("gap at slot {first_slot} is long; linear interpolation only fills short gaps")]
    NotShort { first_slot: usize },
    #[error("gap at slot {first_slot} (length {length}) lacks a present value on both sides")]
    BoundaryMissing { first_slot: usize, length: usize },
    #[error("slot {slot}: no neighbour has a value")]
    NoNeighbourData { slot: usize },
    #[error("slot {slot}: every neighbour with a value has a zero mean")]
    ZeroNeighbourMean { slot: usize },
    #[error("slot {slot}: weights sum to zero or are not finite")]
    DegenerateWeights { slot: usize },
    #[error("got {found} observations for {expected} neighbours")]
    ObservationCountMismatch { expected: usize, found: usize },
    #[error("no present target value in month {month} to fall back on")]
    NoFallbackMean { month: u32 },
    #[error("{0} is not a long-gap method")]
    NotANeighbourMethod(MethodTag),
}

/// Fills a short gap on the straight line between the values that bracket it.
pub fn linear_interpolate<T: Scalar>(
    series: &StationSeries<T>,
    gap: &GapSpan,
) -> Result<Vec<ImputedValue<T>>, ImputeError> {
    if gap.class != GapClass::Short {
        return Err(ImputeError::NotShort {
            first_slot: gap.first_slot,
        });
    }
    let boundary = || ImputeError::BoundaryMissing {
        first_slot: gap.first_slot,
        length: gap.length,
    };
    let prev = gap
        .first_slot
        .checked_sub(1)
        .and_then(|i| series.get(i))
        .ok_or_else(boundary)?;
    let next = series.get(gap.first_slot + gap.length).ok_or_else(boundary)?;
    let step = (next - prev) / T::of((gap.length + 1) as f64);
    Ok((1..=gap.length)
        .map(|j| {
            ImputedValue::new(prev + step * T::of(j as f64), FillMethod::LinearInterp, gap.first_slot + j - 1)
                .clamp_for(series.variable())
        })
        .collect())
}

fn check_len<T>(ns: &NeighbourSet<T>, obs: &[Option<T>]) -> Result<(), ImputeError> {
    if ns.len() != obs.len() {
        return Err(ImputeError::ObservationCountMismatch {
            expected: ns.len(),
            found: obs.len(),
        });
    }
    Ok(())
}

/// Indices and values of the neighbours present at the slot.
fn present<T: Scalar>(obs: &[Option<T>], slot: usize) -> Result<Vec<(usize, T)>, ImputeError> {
    let p: Vec<_> = obs
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if p.is_empty() {
        return Err(ImputeError::NoNeighbourData { slot });
    }
    Ok(p)
}

fn with_nonzero_means<T: Scalar>(
    ns: &NeighbourSet<T>,
    p: Vec<(usize, T)>,
    slot: usize,
) -> Result<Vec<(usize, T)>, ImputeError> {
    let kept: Vec<_> = p
        .into_iter()
        .filter(|&(i, _)| ns.neighbours[i].neighbour_mean != T::zero())
        .collect();
    if kept.is_empty() {
        return Err(ImputeError::ZeroNeighbourMean { slot });
    }
    Ok(kept)
}

fn ratio<T: Scalar>(ns: &NeighbourSet<T>, i: usize) -> T {
    let n = &ns.neighbours[i];
    n.target_mean / n.neighbour_mean
}

fn finish<T: Scalar>(
    ns: &NeighbourSet<T>,
    value: T,
    method: FillMethod,
    slot: usize,
    contributors: impl IntoIterator<Item = usize>,
) -> ImputedValue<T> {
    let mut out = ImputedValue::new(value, method, slot);
    out.contributing_stations = contributors
        .into_iter()
        .map(|i| ns.neighbours[i].meta.station_id.clone())
        .collect();
    out.clamp_for(ns.variable)
}

/// Normal ratio estimate: the mean over contributing neighbours of
/// `(M_s / M_i) * Y_i`.
pub fn impute_nr<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
) -> Result<ImputedValue<T>, ImputeError> {
    check_len(ns, obs)?;
    let used = with_nonzero_means(ns, present(obs, slot)?, slot)?;
    let sum = used
        .iter()
        .fold(T::zero(), |acc, &(i, y)| acc + ratio(ns, i) * y);
    let value = sum / T::of(used.len() as f64);
    Ok(finish(ns, value, FillMethod::Nr, slot, used.iter().map(|&(i, _)| i)))
}

/// Weights of the coordinate method, or the index of a neighbour sitting on
/// the target.
pub enum Weights<T> {
    Normalised(Vec<(usize, T)>),
    Coincident(usize),
}

fn inverse_offset<T: Scalar>(ns: &NeighbourSet<T>, i: usize) -> T {
    T::one() / T::of(ns.neighbours[i].offset_sq())
}

fn coincident<T: Scalar>(ns: &NeighbourSet<T>, p: &[(usize, T)]) -> Option<usize> {
    p.iter()
        .map(|&(i, _)| i)
        .find(|&i| ns.neighbours[i].offset_sq() == 0.0)
}

fn normalise<T: Scalar>(raw: Vec<(usize, T)>, slot: usize) -> Result<Vec<(usize, T)>, ImputeError> {
    let total = raw.iter().fold(T::zero(), |acc, &(_, w)| acc + w);
    if total == T::zero() || !total.is_finite() {
        return Err(ImputeError::DegenerateWeights { slot });
    }
    Ok(raw.into_iter().map(|(i, w)| (i, w / total)).collect())
}

/// Weights `(1/(x_i²+y_i²)) / Σ_j (1/(x_j²+y_j²))` over present neighbours.
pub fn gc_weights<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
) -> Result<Weights<T>, ImputeError> {
    check_len(ns, obs)?;
    let p = present(obs, slot)?;
    if let Some(i) = coincident(ns, &p) {
        return Ok(Weights::Coincident(i));
    }
    let raw = p.iter().map(|&(i, _)| (i, inverse_offset(ns, i))).collect();
    normalise(raw, slot).map(Weights::Normalised)
}

/// Weights proportional to `(1/(x_i²+y_i²)) * (M_s/M_i)` over present
/// neighbours with a nonzero mean.
pub fn nrgc_weights<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
) -> Result<Weights<T>, ImputeError> {
    check_len(ns, obs)?;
    let p = present(obs, slot)?;
    if let Some(i) = coincident(ns, &p) {
        return Ok(Weights::Coincident(i));
    }
    let used = with_nonzero_means(ns, p, slot)?;
    let raw = used
        .iter()
        .map(|&(i, _)| (i, inverse_offset(ns, i) * ratio(ns, i)))
        .collect();
    normalise(raw, slot).map(Weights::Normalised)
}

fn weighted<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
    weights: Weights<T>,
    method: FillMethod,
) -> ImputedValue<T> {
    match weights {
        Weights::Coincident(i) => {
            let mut v = finish(ns, obs[i].expect("coincident neighbour is present"), method, slot, [i]);
            v.coincident = true;
            v
        }
        Weights::Normalised(w) => {
            let value = w
                .iter()
                .fold(T::zero(), |acc, &(i, w)| acc + w * obs[i].expect("weighted neighbour is present"));
            finish(ns, value, method, slot, w.iter().map(|&(i, _)| i))
        }
    }
}

/// Inverse squared coordinate offset weighting.
pub fn impute_gc<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
) -> Result<ImputedValue<T>, ImputeError> {
    let w = gc_weights(ns, slot, obs)?;
    Ok(weighted(ns, slot, obs, w, FillMethod::Gc))
}

/// Normal ratio combined with inverse squared coordinate offset weighting.
pub fn impute_nrgc<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
) -> Result<ImputedValue<T>, ImputeError> {
    let w = nrgc_weights(ns, slot, obs)?;
    Ok(weighted(ns, slot, obs, w, FillMethod::Nrgc))
}

/// Long-term mean of a station per calendar month, pooled across years.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyMeans<T> {
    means: [Option<T>; 12],
}

impl<T: Scalar> MonthlyMeans<T> {
    pub fn from_series(series: &StationSeries<T>) -> Self {
        let mut sums = [T::zero(); 12];
        let mut counts = [0usize; 12];
        for (i, v) in series.present_values() {
            let m = series.timestamp(i).month0() as usize;
            sums[m] = sums[m] + v;
            counts[m] += 1;
        }
        let mut means = [None; 12];
        for m in 0..12 {
            if counts[m] > 0 {
                means[m] = Some(sums[m] / T::of(counts[m] as f64));
            }
        }
        MonthlyMeans { means }
    }

    pub fn from_array(means: [Option<T>; 12]) -> Self {
        MonthlyMeans { means }
    }

    /// Mean for `month` in 1..=12.
    pub fn get(&self, month: u32) -> Option<T> {
        (1..=12).contains(&month).then(|| self.means[month as usize - 1]).flatten()
    }
}

/// Nearest-neighbour cascade: the first of the `depth` best-ranked
/// neighbours with a value at the slot is copied unchanged. When none has
/// one, the target's long-term mean for `month` is used instead.
pub fn impute_nn<T: Scalar>(
    ns: &NeighbourSet<T>,
    slot: usize,
    obs: &[Option<T>],
    long_term: &MonthlyMeans<T>,
    month: u32,
    depth: usize,
) -> Result<ImputedValue<T>, ImputeError> {
    check_len(ns, obs)?;
    if let Some((i, v)) = obs
        .iter()
        .take(depth)
        .enumerate()
        .find_map(|(i, v)| v.map(|v| (i, v)))
    {
        return Ok(finish(ns, v, FillMethod::Nn, slot, [i]));
    }
    let mean = long_term
        .get(month)
        .ok_or(ImputeError::NoFallbackMean { month })?;
    Ok(ImputedValue::new(mean, FillMethod::LongTermMeanFallback, slot).clamp_for(ns.variable))
}

/// Neighbour series lined up with the target's slot index.
pub struct AlignedNeighbours<'a, T> {
    columns: Vec<(&'a StationSeries<T>, i64)>,
}

impl<'a, T: Scalar> AlignedNeighbours<'a, T> {
    /// Looks up each neighbour of `ns` among `pool`.
    pub fn new(
        ns: &NeighbourSet<T>,
        target: &StationSeries<T>,
        pool: &[&'a StationSeries<T>],
    ) -> Result<Self, GeoError> {
        let columns = ns
            .neighbours
            .iter()
            .map(|n| {
                let id = n.meta.station_id.as_str();
                let s = pool
                    .iter()
                    .copied()
                    .find(|s| s.station_id() == id && s.variable() == ns.variable)
                    .ok_or_else(|| GeoError::MissingSeries {
                        station_id: id.to_string(),
                        variable: ns.variable,
                    })?;
                let off = target.grid_offset(s).ok_or_else(|| GeoError::Misaligned {
                    station_id: id.to_string(),
                })?;
                Ok((s, off))
            })
            .collect::<Result<_, GeoError>>()?;
        Ok(AlignedNeighbours { columns })
    }

    /// Neighbour observations at target slot `slot`.
    pub fn at(&self, slot: usize) -> Vec<Option<T>> {
        self.columns
            .iter()
            .map(|&(s, off)| StationSeries::aligned_value(s, off, slot))
            .collect()
    }
}

/// Everything a long-gap estimator may need beyond the neighbour set.
pub struct LongGapInputs<'a, T> {
    pub target: &'a StationSeries<T>,
    pub neighbours: &'a AlignedNeighbours<'a, T>,
    pub long_term: &'a MonthlyMeans<T>,
    pub nn_depth: usize,
}

/// Runs `method` at target slot `slot`.
pub fn impute_long<T: Scalar>(
    method: MethodTag,
    ns: &NeighbourSet<T>,
    slot: usize,
    inputs: &LongGapInputs<'_, T>,
) -> Result<ImputedValue<T>, ImputeError> {
    let obs = inputs.neighbours.at(slot);
    match method {
        MethodTag::Nr => impute_nr(ns, slot, &obs),
        MethodTag::Gc => impute_gc(ns, slot, &obs),
        MethodTag::Nrgc => impute_nrgc(ns, slot, &obs),
        MethodTag::Nn => {
            let month = inputs.target.timestamp(slot).month();
            impute_nn(ns, slot, &obs, inputs.long_term, month, inputs.nn_depth)
        }
        MethodTag::LinearInterp => Err(ImputeError::NotANeighbourMethod(method)),
    }
}
