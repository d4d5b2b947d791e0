//! Leakage-controlled evaluation of fine-tuned feature extractors for video
//! quality regression: splits, extractor training, pooling, SVR, metrics and
//! the protocol harness that ties them together.

pub mod cache;
pub mod dataset;
pub mod endtoend;
pub mod error;
pub mod extractor;
pub mod harness;
pub mod matrix_io;
pub mod metrics;
pub mod nn;
pub mod pooling;
pub mod regressor;
pub mod report;
pub mod scalar;
pub mod seed;
pub mod splitter;

pub use error::{LeakError, Result};

pub type RegressionModel64 = regressor::RegressionModel<f64>;
pub type RegressionModel32 = regressor::RegressionModel<f32>;
pub type SvrConfig64 = regressor::SvrConfig<f64>;
pub type SvrConfig32 = regressor::SvrConfig<f32>;
pub type KernelSpec64 = regressor::KernelSpec<f64>;
pub type KernelSpec32 = regressor::KernelSpec<f32>;
pub type FitDiagnostics64 = regressor::FitDiagnostics<f64>;
pub type CorrelationResult64 = metrics::CorrelationResult<f64>;
pub type CorrelationResult32 = metrics::CorrelationResult<f32>;
pub type Aggregate64 = metrics::Aggregate<f64>;
pub type MeanStd64 = metrics::MeanStd<f64>;
