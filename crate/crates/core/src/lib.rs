//! Simulation laboratory for regression bias mechanisms: structural-equation
//! data generation, regression fitting, and Monte Carlo bias analysis.

pub mod causal;
pub mod datakit;
pub mod error;
pub mod estimators;
pub mod mc;
pub mod measure;
pub mod rng;
pub mod scenario;
pub mod simcore;

pub use error::{Error, Result};
