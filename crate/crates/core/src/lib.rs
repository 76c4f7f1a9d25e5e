//! Singular-value penalized estimators for low-rank matrix approximation and
//! multivariate reduced-rank regression.
//!
//! The crate provides hard, soft and adaptive soft SVD-thresholding, the
//! RSC / NNP / ANN / RoRR / RoANN regression estimators, K-fold and
//! validation-set tuning, the Model I / Model II simulation harness, and
//! Monte Carlo checks of the estimators' optimality and consistency
//! guarantees.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod rng;
pub mod simulation;
pub mod theory;
pub mod threshold;
pub mod tuning;

pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, FitPath, FitResult, Method, NnpOptions};
pub use linalg::{Matrix, Svd, Tolerances, Vector};
pub use simulation::{ExperimentRow, Model, Scenario, Tuning};
pub use theory::{CheckReport, TheoryCheckConfig, Verdict};
pub use threshold::Weights;
pub use tuning::{CvOptions, CvReport, LambdaGrid};
