//! Station geometry and neighbour selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{LonLat, Neighbour, NeighbourSet, StationMeta, StationSeries, Variable};
use crate::scalar::Scalar;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("k must be at least 1")]
    ZeroNeighbours,
    #[error("asked for {requested} neighbours but only {available} candidates exist")]
    NoCandidates { requested: usize, available: usize },
    #[error("no {variable} series for station {station_id}")]
    MissingSeries { station_id: String, variable: Variable },
    #[error("series of {station_id} is not on the target's time grid")]
    Misaligned { station_id: String },
    #[error("none of the selected neighbours of {target} overlap it in time: {excluded:?}")]
    EmptyOverlap { target: String, excluded: Vec<String> },
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// How candidate neighbours are ordered before the nearest `k` are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ranking {
    /// Ascending haversine distance, ties by station id.
    #[default]
    Geometric,
    /// Descending Pearson correlation with the target over the pairwise
    /// overlap, ties by station id.
    Correlation,
}

impl FromStr for Ranking {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geometric" => Ok(Ranking::Geometric),
            "correlation" => Ok(Ranking::Correlation),
            _ => Err(format!("unknown ranking {s:?}, expected geometric|correlation")),
        }
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ranking::Geometric => "geometric",
            Ranking::Correlation => "correlation",
        })
    }
}

/// Sums over the slots where both series are present.
#[derive(Debug, Clone, Copy)]
pub struct Overlap<T> {
    pub count: usize,
    pub target_mean: T,
    pub neighbour_mean: T,
    /// Pearson correlation, `None` when either side is constant.
    pub correlation: Option<f64>,
}

/// Means (and correlation) of `target` and `other` over their common present
/// slots. Returns `Ok(None)` for an empty overlap.
pub fn overlap<T: Scalar>(
    target: &StationSeries<T>,
    other: &StationSeries<T>,
) -> Result<Option<Overlap<T>>, GeoError> {
    let offset = target.grid_offset(other).ok_or_else(|| GeoError::Misaligned {
        station_id: other.station_id().to_string(),
    })?;
    let (mut n, mut st, mut so) = (0usize, T::zero(), T::zero());
    for (i, a) in target.present_values() {
        if let Some(b) = StationSeries::aligned_value(other, offset, i) {
            n += 1;
            st = st + a;
            so = so + b;
        }
    }
    if n == 0 {
        return Ok(None);
    }
    let count = T::of(n as f64);
    let (mt, mo) = (st / count, so / count);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, a) in target.present_values() {
        if let Some(b) = StationSeries::aligned_value(other, offset, i) {
            let (dx, dy) = ((a - mt).as_f64(), (b - mo).as_f64());
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    let correlation = (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt());
    Ok(Some(Overlap {
        count: n,
        target_mean: mt,
        neighbour_mean: mo,
        correlation,
    }))
}

/// Selects the `k` best-ranked candidates for `target` and attaches distance,
/// coordinate offset and pairwise-overlap means to each.
///
/// `series` must contain one series of `variable` for the target and for
/// every candidate; extra series are ignored. Selected candidates that share
/// no present slot with the target are dropped into `excluded`.
pub fn build_neighbour_set<T: Scalar>(
    target: &StationMeta,
    candidates: &[StationMeta],
    k: usize,
    variable: Variable,
    series: &[&StationSeries<T>],
    ranking: Ranking,
) -> Result<NeighbourSet<T>, GeoError> {
    if k == 0 {
        return Err(GeoError::ZeroNeighbours);
    }
    let find = |id: &str| {
        series
            .iter()
            .copied()
            .find(|s| s.station_id() == id && s.variable() == variable)
            .ok_or_else(|| GeoError::MissingSeries {
                station_id: id.to_string(),
                variable,
            })
    };
    let target_series = find(&target.station_id)?;
    let pool: Vec<&StationMeta> = candidates
        .iter()
        .filter(|c| c.station_id != target.station_id)
        .collect();
    if k > pool.len() {
        return Err(GeoError::NoCandidates {
            requested: k,
            available: pool.len(),
        });
    }

    let origin = target.position();
    let mut ranked = Vec::with_capacity(pool.len());
    for c in pool {
        let stats = overlap(target_series, find(&c.station_id)?)?;
        ranked.push((c, haversine_km(origin, c.position()), stats));
    }
    match ranking {
        Ranking::Geometric => ranked.sort_by(|a, b| {
            a.1.total_cmp(&b.1).then_with(|| a.0.station_id.cmp(&b.0.station_id))
        }),
        Ranking::Correlation => ranked.sort_by(|a, b| {
            let ca = a.2.and_then(|o| o.correlation);
            let cb = b.2.and_then(|o| o.correlation);
            match (ca, cb) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            }
            .then_with(|| a.0.station_id.cmp(&b.0.station_id))
        }),
    }

    let mut neighbours = Vec::with_capacity(k);
    let mut excluded = Vec::new();
    for (meta, distance_km, stats) in ranked.into_iter().take(k) {
        match stats {
            Some(o) => neighbours.push(Neighbour {
                meta: meta.clone(),
                distance_km,
                offset: (meta.longitude - target.longitude, meta.latitude - target.latitude),
                target_mean: o.target_mean,
                neighbour_mean: o.neighbour_mean,
            }),
            None => excluded.push(meta.station_id.clone()),
        }
    }
    if neighbours.is_empty() {
        return Err(GeoError::EmptyOverlap {
            target: target.station_id.clone(),
            excluded,
        });
    }
    Ok(NeighbourSet {
        target: target.clone(),
        variable,
        neighbours,
        excluded,
    })
}
