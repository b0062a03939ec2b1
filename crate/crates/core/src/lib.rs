//! How far can a misspecified recursive linear model overstate the correlation
//! between two variables, if the only check anyone runs is that each variable's
//! estimated variance comes out right?
//!
//! Each equation of a recursive model regresses a variable on earlier ones.
//! Chaining the fitted equations yields model-implied moments, and the
//! model's correlation `ρ̂_1n` between the first and last variable can differ
//! from the true `ρ_1n = r`. This crate fits such models from correlation
//! matrices, audits the implied variances, evaluates the closed-form ceilings
//! on `ρ̂_1n` together with constructions that reach them, and checks all of it
//! against independent numerical oracles.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod binary;
pub mod bounds;
pub mod corr;
pub mod dag;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod optimize;
pub mod reduction;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CorrMatrixF64 = corr::CorrMatrix<f64>;
pub type CorrMatrixF32 = corr::CorrMatrix<f32>;
pub type FittedModelF64 = estimator::FittedModel<f64>;
pub type FittedModelF32 = estimator::FittedModel<f32>;
pub type EstimatedMomentsF64 = estimator::EstimatedMoments<f64>;
pub type EstimatedMomentsF32 = estimator::EstimatedMoments<f32>;
pub type ChainReductionF64 = reduction::ChainReduction<f64>;
pub type ChainReductionF32 = reduction::ChainReduction<f32>;
pub type BinaryJointF64 = binary::BinaryJoint<f64>;
pub type BinaryJointF32 = binary::BinaryJoint<f32>;
pub type PoolProblemF64 = search::PoolProblem<f64>;
pub type PoolProblemF32 = search::PoolProblem<f32>;
