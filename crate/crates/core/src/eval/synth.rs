//! Synthetic multi-station weather generator used as a stand-in for real
//! station networks.
//!
//! Temperature is a seasonal plus diurnal cycle with a latitude gradient and
//! an AR(1) anomaly field whose spatial covariance is a squared exponential
//! of distance. Rainfall comes from moving storm cells with a Gaussian footprint,
//! so nearby stations share bursts and distant ones rarely do; each station
//! sees the cell through its own multiplicative gauge noise.

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::EvalError;
use crate::geo::haversine_km;
use crate::model::{Cadence, Dataset, LonLat, StationMeta, StationSeries, Variable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub days: u32,
    pub seed: u64,
    pub start: NaiveDate,
    pub cadence: Cadence,
    /// Scales both the temperature anomaly field and the rain gauge noise.
    pub noise_amplitude: f64,
    pub lon_range: (f64, f64),
    pub lat_range: (f64, f64),
    /// Length scale of the squared-exponential temperature anomaly correlation.
    pub correlation_km: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_stations: 12,
            days: 365,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            cadence: Cadence::default(),
            noise_amplitude: 1.0,
            lon_range: (-4.0, -0.5),
            lat_range: (50.5, 53.0),
            correlation_km: 60.0,
        }
    }
}

const TEMP_ANOMALY_SD: f64 = 1.5;
const TEMP_NUGGET: f64 = 0.02;
const TEMP_AR_PER_HOUR: f64 = 0.92;
const RAIN_GAUGE_SD: f64 = 0.2;
const RAIN_CELL_BIRTHS_PER_HOUR: f64 = 0.3;
const RAIN_THRESHOLD_MM: f64 = 0.05;

/// `n_stations` stations observed for `days` days from 2014-01-01 at 15-min
/// cadence.
pub fn synth_dataset<T: Scalar>(n_stations: usize, days: u32, seed: u64) -> Result<Dataset<T>, EvalError> {
    synth_with(&SynthConfig {
        n_stations,
        days,
        seed,
        ..SynthConfig::default()
    })
}

pub fn synth_with<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>, EvalError> {
    if cfg.n_stations < 2 {
        return Err(EvalError::InvalidSynth("need at least two stations".into()));
    }
    if !(cfg.noise_amplitude >= 0.0) || !(cfg.correlation_km > 0.0) {
        return Err(EvalError::InvalidSynth("noise amplitude and correlation length must be positive".into()));
    }
    if cfg.lon_range.0 >= cfg.lon_range.1 || cfg.lat_range.0 >= cfg.lat_range.1 {
        return Err(EvalError::InvalidSynth("empty station box".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.n_stations.to_string().len().max(2);
    let stations: Vec<StationMeta> = (0..cfg.n_stations)
        .map(|i| {
            let lon = round_to(rng.random_range(cfg.lon_range.0..cfg.lon_range.1), 3);
            let lat = round_to(rng.random_range(cfg.lat_range.0..cfg.lat_range.1), 3);
            StationMeta::new(
                format!("st{:0width$}", i + 1),
                lon,
                lat,
                Some(format!("Synthetic station {}", i + 1)),
            )
            .expect("box lies inside valid coordinates")
        })
        .collect();

    let start = cfg.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    let n_slots = cfg.days as usize * cfg.cadence.slots_per_day() as usize;
    let temperature = temperature_fields(cfg, &stations, n_slots, ChaCha8Rng::seed_from_u64(rng.random()));
    let rainfall = rainfall_fields(cfg, &stations, n_slots, ChaCha8Rng::seed_from_u64(rng.random()));

    let mut series = Vec::with_capacity(2 * cfg.n_stations);
    for (i, s) in stations.iter().enumerate() {
        for (variable, field) in [(Variable::Temperature, &temperature), (Variable::Rainfall, &rainfall)] {
            let slots = field[i].iter().map(|&v| Some(T::of(v))).collect();
            series.push(StationSeries::new(s.station_id.clone(), variable, start, cfg.cadence, slots));
        }
    }
    Ok(Dataset { stations, series })
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

fn distance_matrix(stations: &[StationMeta]) -> DMatrix<f64> {
    let n = stations.len();
    DMatrix::from_fn(n, n, |i, j| haversine_km(stations[i].position(), stations[j].position()))
}

fn temperature_fields(cfg: &SynthConfig, stations: &[StationMeta], n_slots: usize, mut rng: ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = stations.len();
    let d = distance_matrix(stations);
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let r = d[(i, j)] / cfg.correlation_km;
        let shared = (1.0 - TEMP_NUGGET) * (-r * r).exp();
        if i == j {
            shared + TEMP_NUGGET
        } else {
            shared
        }
    });
    let chol = cov
        .cholesky()
        .expect("squared-exponential covariance with a nugget is positive definite")
        .unpack();

    let hours_per_slot = cfg.cadence.seconds() as f64 / 3600.0;
    let phi = TEMP_AR_PER_HOUR.powf(hours_per_slot);
    let innovation = (1.0 - phi * phi).sqrt();
    let sd = TEMP_ANOMALY_SD * cfg.noise_amplitude;
    let mid_lat = (cfg.lat_range.0 + cfg.lat_range.1) / 2.0;
    let base: Vec<f64> = stations.iter().map(|s| 10.0 - 0.6 * (s.latitude - mid_lat)).collect();

    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut z = &chol * draw(&mut rng);
    let start = cfg.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    let mut out = vec![Vec::with_capacity(n_slots); n];
    for t in 0..n_slots {
        if t > 0 {
            z = &z * phi + (&chol * draw(&mut rng)) * innovation;
        }
        let ts = start + Duration::seconds(t as i64 * cfg.cadence.seconds() as i64);
        let doy = ts.ordinal0() as f64;
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let seasonal = -6.0 * (2.0 * std::f64::consts::PI * (doy - 15.0) / 365.25).cos();
        let diurnal = -4.0 * (2.0 * std::f64::consts::PI * (hour - 3.0) / 24.0).cos();
        for i in 0..n {
            out[i].push(round_to(base[i] + seasonal + diurnal + sd * z[i], 2));
        }
    }
    out
}

struct Cell {
    centre: LonLat,
    velocity: (f64, f64),
    radius_km: f64,
    peak_mm: f64,
    age: usize,
    lifetime: usize,
}

fn rainfall_fields(cfg: &SynthConfig, stations: &[StationMeta], n_slots: usize, mut rng: ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = stations.len();
    let hours_per_slot = cfg.cadence.seconds() as f64 / 3600.0;
    let birth_p = (RAIN_CELL_BIRTHS_PER_HOUR * hours_per_slot).min(1.0);
    let lon = (cfg.lon_range.0 - 1.0, cfg.lon_range.1 + 1.0);
    let lat = (cfg.lat_range.0 - 1.0, cfg.lat_range.1 + 1.0);
    let intensity = Exp::new(2.5).expect("positive rate");
    let gauge_sd = RAIN_GAUGE_SD * cfg.noise_amplitude;

    let mut cells: Vec<Cell> = Vec::new();
    let mut out = vec![Vec::with_capacity(n_slots); n];
    for _ in 0..n_slots {
        if rng.random::<f64>() < birth_p {
            let lifetime_h: f64 = rng.random_range(1.0..6.0);
            cells.push(Cell {
                centre: LonLat::new(rng.random_range(lon.0..lon.1), rng.random_range(lat.0..lat.1)),
                velocity: (
                    rng.random_range(0.02..0.12) * hours_per_slot * 4.0,
                    rng.random_range(-0.04..0.04) * hours_per_slot * 4.0,
                ),
                radius_km: rng.random_range(30.0..120.0),
                peak_mm: intensity.sample(&mut rng) * hours_per_slot * 4.0,
                age: 0,
                lifetime: ((lifetime_h / hours_per_slot).round() as usize).max(1),
            });
        }
        for (i, s) in stations.iter().enumerate() {
            let mut total = 0.0;
            for c in &cells {
                let envelope = (std::f64::consts::PI * (c.age as f64 + 0.5) / c.lifetime as f64).sin();
                let d = haversine_km(s.position(), c.centre) / c.radius_km;
                total += c.peak_mm * envelope * (-d * d).exp();
            }
            let noise: f64 = rng.sample(StandardNormal);
            let v = if total > 0.0 {
                total * (gauge_sd * noise - gauge_sd * gauge_sd / 2.0).exp()
            } else {
                0.0
            };
            out[i].push(if v < RAIN_THRESHOLD_MM { 0.0 } else { round_to(v, 2) });
        }
        for c in &mut cells {
            c.age += 1;
            c.centre.lon += c.velocity.0;
            c.centre.lat += c.velocity.1;
        }
        cells.retain(|c| c.age < c.lifetime);
    }
    out
}
