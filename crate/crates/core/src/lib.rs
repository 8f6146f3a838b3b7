//! Contamination-length interval prediction for multi-product pipelines.
//!
//! The crate bundles the closed-form mixed-oil mechanism math, a small
//! reverse-mode autodiff tape, the physics-enhanced fused network with its
//! coupling loss, Adam training, a physics-consistent synthetic data
//! generator, and the benchmark/ablation harness.
//!
//! The numeric core is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the concrete `f64` aliases below are what the CLI and
//! the test suite use, since the gradient checks assume 64-bit precision.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod gradsuite;
pub mod loss;
pub mod mechanism;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tape;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations used throughout the CLI and the acceptance suite.
pub type Value64 = tape::Value<f64>;
pub type Tape64 = tape::Tape<f64>;
pub type Model64 = model::Model<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type Batch64 = data::Batch<f64>;
pub type FeatureTable64 = data::FeatureTable<f64>;
pub type PipeSpec64 = mechanism::PipeSpec<f64>;
pub type FlowState64 = mechanism::FlowState<f64>;
pub type OperationPlan64 = mechanism::OperationPlan<f64>;
