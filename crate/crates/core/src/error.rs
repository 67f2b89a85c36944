//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulation and optimisation kernels.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A numeric argument violated its domain (e.g. SoC outside `[0, 1]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set violated an invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The requested cell power exceeds what the cell can deliver. The caller
    /// must clip the request to `max_feasible_w`.
    #[error("requested cell power {requested_w} W exceeds cell capability (max feasible {max_feasible_w} W)")]
    Capability {
        requested_w: f64,
        max_feasible_w: f64,
    },

    /// Pulse-test fitting could not identify the RC parameters.
    #[error("pulse fit error: {0}")]
    Fit(String),

    /// Input data failed validation.
    #[error("data error in {path}, line {line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    /// The battery cannot pass the prequalification test at the requested
    /// reserve capacity.
    #[error("prequalification failure: {0}")]
    Prequalification(String),

    /// Configuration is inconsistent or incomplete.
    #[error("config error: {0}")]
    Config(String),

    /// A simulation failed while evaluating a specific frequency sample.
    #[error("simulation failed on sample {sample_id}: {source}")]
    Simulation {
        sample_id: usize,
        #[source]
        source: Box<CoreError>,
    },

    /// Generic I/O failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
