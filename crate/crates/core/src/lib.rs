//! Matched difference-in-differences engine for county-level exposure
//! studies of birth outcomes.
//!
//! The pipeline runs cohort selection, optimal pair matching with balance
//! diagnostics, fixed-effects logistic DiD models with cluster-robust
//! inference, a pre-period test of controls, an unmeasured-confounder sweep
//! and an EM fit of a latent mother-level exposure model. A synthetic data
//! generator provides ground truth for every estimator.

pub mod cohort;
pub mod config;
pub mod data;
pub mod did;
pub mod error;
pub mod fit;
pub mod glm;
pub mod io;
pub mod matching;
pub mod outcome;
pub mod pipeline;
pub mod report;
pub mod sensitivity;
pub mod synthgen;

pub use config::{Outcome, StudyConfig};
pub use data::{BirthRecord, CountyId, CountyPanel, CovariateVector, YearRange};
pub use error::{Error, Result};
pub use fit::FitResult;
