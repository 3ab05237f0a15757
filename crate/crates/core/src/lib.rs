//! Win-probability models, evaluation metrics, win-strength analysis, model
//! ensembles and run-line betting backtests for baseball.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod betting;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod scalar;
pub mod strength;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type FeatureMatrix32 = features::FeatureMatrix<f32>;
pub type Predictions = models::PredictionSet<f64>;
pub type Predictions32 = models::PredictionSet<f32>;
