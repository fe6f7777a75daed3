//! Adaptive transfer learning for high-dimensional linear regression.
//!
//! Two estimators fit a sparse target parameter with help from source
//! samples whose parameters differ from the target's by a contrast:
//!
//! - [`feature_transfer`] fuses sources feature by feature with weighted
//!   `ℓ1` penalties on the contrasts;
//! - [`sample_transfer`] weights whole sources and constrains the target
//!   gradient.
//!
//! Everything numeric is generic over [`Real`] (`f64` or `f32`); the
//! aliases below name the common `f64` and `f32` instantiations.

pub mod cv;
pub mod datagen;
pub mod dump;
pub mod error;
pub mod feature_transfer;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod sample_transfer;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TransferProblem64 = model::TransferProblem<f64>;
pub type GroundTruth64 = model::GroundTruth<f64>;
pub type Estimate64 = model::Estimate<f64>;
pub type FeatureWeights64 = penalty::FeatureWeights<f64>;
pub type SampleWeights64 = sample_transfer::SampleWeights<f64>;

pub type TransferProblem32 = model::TransferProblem<f32>;
pub type GroundTruth32 = model::GroundTruth<f32>;
pub type Estimate32 = model::Estimate<f32>;
pub type FeatureWeights32 = penalty::FeatureWeights<f32>;
pub type SampleWeights32 = sample_transfer::SampleWeights<f32>;
