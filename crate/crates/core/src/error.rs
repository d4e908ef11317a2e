//! Error type shared by every stage of the engine.

use thiserror::Error;

/// Engine-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input data is incomplete (missing years, missing source fields).
    #[error("data error: {0}")]
    Data(String),

    /// A CSV row could not be parsed or failed validation.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    /// Fewer controls than treated units, or a caliper forbids every completion.
    #[error("infeasible matching: {0}")]
    Infeasible(String),

    /// A covariate has zero pooled spread but different group means.
    #[error("degenerate covariate {0}")]
    DegenerateCovariate(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// IRLS ran out of iterations. `last` holds the final iterate.
    #[error("no convergence after {iterations} iterations (max |score| = {max_score:e})")]
    NonConvergence {
        iterations: usize,
        max_score: f64,
        last: Vec<f64>,
    },

    /// Fitted probabilities collapsed to 0/1 with diverging coefficients.
    #[error("separation detected: {0}")]
    Separation(String),

    /// The treatment coefficient cannot be identified from the design.
    #[error("non-identifiable: {0}")]
    NonIdentifiable(String),

    /// Cluster-robust covariance needs at least two clusters.
    #[error("too few clusters: {0} (need at least 2)")]
    TooFewClusters(usize),

    #[error("invalid theta {theta}: theta * max dose = {product} exceeds 1")]
    InvalidTheta { theta: f64, product: f64 },

    /// A pipeline stage failed.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
