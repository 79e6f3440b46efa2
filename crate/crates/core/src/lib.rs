//! Gap detection, spatial imputation and RMSE benchmarking for multi-station
//! weather time series (temperature and rainfall).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod eval;
pub mod geo;
pub mod impute;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod scalar;

pub use model::{
    Cadence, Dataset, FillMethod, GapClass, GapSpan, ImputedValue, LonLat, MethodTag, Neighbour,
    NeighbourSet, StationMeta, StationSeries, Variable,
};
pub use scalar::Scalar;

pub type Series = StationSeries<f64>;
pub type Series32 = StationSeries<f32>;
pub type Neighbours = NeighbourSet<f64>;
pub type Imputed = ImputedValue<f64>;
pub type WeatherData = Dataset<f64>;
