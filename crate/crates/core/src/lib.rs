//! Desk-scale neural-network training laboratory.
//!
//! The crate trains small MLPs and residual MLPs with a minimal reverse-mode
//! autodiff engine, schedules dropout / stochastic-depth rates over time
//! (early, late, increasing, decreasing, annealed, curriculum strategies),
//! and measures gradient dynamics along the way: gradient norm, model
//! distance from initialization, gradient direction variance (GDV), gradient
//! direction error (GDE) against the whole-dataset gradient, GDE area under
//! the curve, and a loss-landscape curvature score.
//!
//! Core math is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the concrete aliases below fix `f64`, which is what the
//! training harness, file formats, and diagnostics use throughout.

#![forbid(unsafe_code)]

pub mod autodiff;
pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod plot;
pub mod regularizers;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod sweep;
pub mod tensor;

pub use error::CoreError;

/// Dense row-major tensor in double precision.
pub type Tensor = tensor::Tensor<f64>;
/// Flattened model weights in double precision.
pub type ParameterVector = params::ParameterVector<f64>;
/// Flattened gradient in double precision.
pub type GradientVector = params::GradientVector<f64>;
/// Collection of mini-batch gradients harvested at one checkpoint.
pub type GradientSet = diagnostics::GradientSet<f64>;
/// A model (plain or residual MLP) in double precision.
pub type Model = model::Model<f64>;
/// A labelled dataset in double precision.
pub type Dataset = data::Dataset<f64>;
/// Optimizer state in double precision.
pub type Optimizer = optim::Optimizer<f64>;
