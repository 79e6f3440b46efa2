//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! The oracles work from raw slot vectors and coordinates and share no code
//! with the library beyond the public types used to feed it.
#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stationfill::geo::{build_neighbour_set, Ranking};
use stationfill::impute::{impute_long, AlignedNeighbours, LongGapInputs, MonthlyMeans, DEFAULT_NN_DEPTH};
use stationfill::{Cadence, Imputed, MethodTag, Neighbours, Series, StationMeta, Variable};

pub fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap()
}

pub fn series(id: &str, variable: Variable, slots: Vec<Option<f64>>) -> Series {
    Series::new(id, variable, start(), Cadence::default(), slots)
}

pub fn meta(id: &str, lon: f64, lat: f64) -> StationMeta {
    StationMeta::new(id, lon, lat, None).unwrap()
}

/// Great-circle distance by the spherical law of cosines.
pub fn cosine_law_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
    6371.0 * c.acos()
}

/// A target with up to five neighbours, all on one grid.
#[derive(Debug, Clone)]
pub struct Instance {
    pub target: (f64, f64, Vec<Option<f64>>),
    pub neighbours: Vec<(String, f64, f64, Vec<Option<f64>>)>,
    pub slot: usize,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_neighbours: usize) -> Instance {
    let len = rng.random_range(8..40);
    let column = |rng: &mut ChaCha8Rng, p_missing: f64| -> Vec<Option<f64>> {
        (0..len)
            .map(|_| (rng.random::<f64>() >= p_missing).then(|| rng.random_range(1.0..30.0)))
            .collect()
    };
    let tlon = rng.random_range(-4.0..0.0);
    let tlat = rng.random_range(50.0..54.0);
    let target = (tlon, tlat, column(rng, 0.3));
    let n = rng.random_range(1..=max_neighbours);
    let neighbours = (0..n)
        .map(|i| {
            let lon = tlon + rng.random_range(-1.0..1.0);
            let lat = tlat + rng.random_range(-1.0..1.0);
            (format!("n{i}"), lon, lat, column(rng, 0.3))
        })
        .collect();
    let slot = rng.random_range(0..len);
    Instance { target, neighbours, slot }
}

pub fn instance_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs the library estimator on an instance with every neighbour selected.
pub fn library_estimate(inst: &Instance, method: MethodTag) -> Result<(Neighbours, Imputed), String> {
    let v = Variable::Temperature;
    let target_meta = meta("target", inst.target.0, inst.target.1);
    let target = series("target", v, inst.target.2.clone());
    let metas: Vec<StationMeta> = inst.neighbours.iter().map(|(id, lon, lat, _)| meta(id, *lon, *lat)).collect();
    let ns_series: Vec<Series> = inst.neighbours.iter().map(|(id, _, _, s)| series(id, v, s.clone())).collect();
    let mut pool: Vec<&Series> = ns_series.iter().collect();
    pool.push(&target);
    let ns = build_neighbour_set(&target_meta, &metas, metas.len(), v, &pool, Ranking::Geometric)
        .map_err(|e| e.to_string())?;
    let aligned = AlignedNeighbours::new(&ns, &target, &pool).map_err(|e| e.to_string())?;
    let long_term = MonthlyMeans::from_series(&target);
    let inputs = LongGapInputs {
        target: &target,
        neighbours: &aligned,
        long_term: &long_term,
        nn_depth: DEFAULT_NN_DEPTH,
    };
    let out = impute_long(method, &ns, inst.slot, &inputs).map_err(|e| e.to_string())?;
    Ok((ns, out))
}

/// Means of target and neighbour over slots where both are present.
pub fn pair_means(target: &[Option<f64>], other: &[Option<f64>]) -> Option<(f64, f64)> {
    let both: Vec<(f64, f64)> = target
        .iter()
        .zip(other)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if both.is_empty() {
        return None;
    }
    let n = both.len() as f64;
    Some((both.iter().map(|p| p.0).sum::<f64>() / n, both.iter().map(|p| p.1).sum::<f64>() / n))
}

/// Per usable neighbour: (value at slot, M_s, M_i, squared degree offset),
/// nearest first.
fn usable(inst: &Instance) -> Vec<(Option<f64>, f64, f64, f64)> {
    let (tlon, tlat, ref t) = inst.target;
    let mut rows: Vec<(f64, &str, Option<f64>, f64, f64, f64)> = inst
        .neighbours
        .iter()
        .filter_map(|(id, lon, lat, s)| {
            let (ms, mi) = pair_means(t, s)?;
            let d2 = (lon - tlon).powi(2) + (lat - tlat).powi(2);
            Some((cosine_law_km(tlon, tlat, *lon, *lat), id.as_str(), s[inst.slot], ms, mi, d2))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    rows.into_iter().map(|r| (r.2, r.3, r.4, r.5)).collect()
}

/// Neighbours sharing at least one present slot with the target.
pub fn usable_count(inst: &Instance) -> usize {
    usable(inst).len()
}

pub fn nr_oracle(inst: &Instance) -> Option<f64> {
    let terms: Vec<f64> = usable(inst)
        .into_iter()
        .filter_map(|(y, ms, mi, _)| Some(ms / mi * y?))
        .collect();
    (!terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64)
}

pub fn gc_oracle(inst: &Instance) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (y, _, _, d2) in usable(inst) {
        if let Some(y) = y {
            num += y / d2;
            den += 1.0 / d2;
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn nrgc_oracle(inst: &Instance) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (y, ms, mi, d2) in usable(inst) {
        if let Some(y) = y {
            num += ms / mi / d2 * y;
            den += ms / mi / d2;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// First present among the three nearest usable neighbours, else the mean
/// of the target's present values in the slot's month.
pub fn nn_oracle(inst: &Instance, month_of_slot: impl Fn(usize) -> u32) -> Option<f64> {
    if let Some(y) = usable(inst).into_iter().take(3).find_map(|r| r.0) {
        return Some(y);
    }
    let m = month_of_slot(inst.slot);
    let same: Vec<f64> = inst
        .target
        .2
        .iter()
        .enumerate()
        .filter(|(i, _)| month_of_slot(*i) == m)
        .filter_map(|(_, v)| *v)
        .collect();
    (!same.is_empty()).then(|| same.iter().sum::<f64>() / same.len() as f64)
}

pub fn oracle(inst: &Instance, method: MethodTag) -> Option<f64> {
    match method {
        MethodTag::Nr => nr_oracle(inst),
        MethodTag::Gc => gc_oracle(inst),
        MethodTag::Nrgc => nrgc_oracle(inst),
        MethodTag::Nn => nn_oracle(inst, |i| {
            use chrono::Datelike;
            (start() + Cadence::default().duration() * i as i32).month()
        }),
        MethodTag::LinearInterp => None,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Compares the library against the oracle on one instance. NN must agree
/// exactly, the weighted methods within `tol` (relative above 1).
pub fn check_instance(inst: &Instance, method: MethodTag, tol: f64) -> Result<(), String> {
    let lib = library_estimate(inst, method);
    let expected = if usable_count(inst) == 0 { None } else { oracle(inst, method) };
    match (lib, expected) {
        (Err(_), None) => Ok(()),
        (Ok((_, got)), Some(want)) => {
            let ok = if method == MethodTag::Nn { got.value == want } else { close(got.value, want, tol) };
            if ok {
                Ok(())
            } else {
                Err(format!("{method}: library {} vs oracle {want} on {inst:?}", got.value))
            }
        }
        (Ok((_, got)), None) => Err(format!("{method}: library gave {} where the oracle has none", got.value)),
        (Err(e), Some(want)) => Err(format!("{method}: library failed ({e}) where the oracle gives {want}")),
    }
}
