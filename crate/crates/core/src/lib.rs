//! Seasonal-trend decomposition for time-series anomaly detection.
//!
//! The crate splits a series into trend, seasonal, and remainder components
//! with a mask-based encoder/separator/decoder backbone, trains it in two
//! phases (decomposition pretraining on synthetic data, reconstruction
//! fine-tuning on target data), scores anomalies by reconstruction error,
//! and calibrates a threshold with peaks-over-threshold tail fitting.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`];
//! the aliases at the crate root pin the default `f64` instantiation used
//! by the pipeline.

pub mod data;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod synthgen;
pub mod training;

pub use error::Error;
pub use scalar::Scalar;

/// Default-precision tensor.
pub type Tensor = numerics::Tensor<f64>;
/// Default-precision computation graph.
pub type Graph = numerics::Graph<f64>;
/// Default-precision optimizer state.
pub type AdamState = numerics::AdamState<f64>;
/// Default-precision series carrier.
pub type TimeSeries = data::TimeSeries<f64>;
/// Default-precision component set.
pub type ComponentSet = synthgen::ComponentSet<f64>;
/// Default-precision model weights.
pub type ModelParams = model::ModelParams<f64>;
/// Default-precision checkpoint bundle.
pub type Checkpoint = model::Checkpoint<f64>;
/// Default-precision normalization stats.
pub type NormStats = training::NormStats<f64>;
/// Default-precision anomaly scores.
pub type ScoreSeries = detection::ScoreSeries<f64>;

/// Single-precision tensor, for callers that trade precision for memory.
pub type Tensor32 = numerics::Tensor<f32>;
/// Single-precision computation graph.
pub type Graph32 = numerics::Graph<f32>;
