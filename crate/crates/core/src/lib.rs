//! Adaptive detection of a known signal in complex elliptically symmetric
//! (CES) clutter with mismatched Gaussian-model detectors.
//!
//! The crate provides CES sampling, mismatched ML estimates, the mismatched
//! GLRT, Kelly, Wald and AMF statistics, the sandwich-matrix machinery that
//! predicts their asymptotic null law, and a reproducible Monte Carlo harness.

pub mod asymptotics;
pub mod ces;
pub mod detectors;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod selftest;

pub use ces::{CesModel, CesSampler, SignalScenario};
pub use detectors::{DetectorKind, DetectorOutput, WaldScatter};
pub use error::{Error, Result};
pub use linalg::{CVector, Cholesky, Dataset, HermitianMatrix, RealParamVector, C64};
pub use montecarlo::{ExperimentConfig, ExperimentResult};
