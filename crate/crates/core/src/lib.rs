//! Influence weighted subsampling for least squares under corrupted
//! observations, with exact and sketched baselines and an experiment harness.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI uses.

pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod matrix;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod srht;

pub use error::{Error, Result};
pub use estimators::{fit, EstimatorConfig, FitResult, Method};
pub use matrix::{DenseMatrix, DenseVector};
pub use sampling::SamplingScheme;
pub use scalar::Real;

pub type Matrix = DenseMatrix<f64>;
pub type Vector = DenseVector<f64>;
pub type Solution = matrix::LeastSquaresSolution<f64>;
pub type Problem = datagen::RegressionProblem<f64>;
pub type Fit = FitResult<f64>;
pub type Diagnostics = diagnostics::DiagnosticsReport<f64>;
