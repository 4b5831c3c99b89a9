//! Shared error type for the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-range parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An evaluation was requested outside a function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A radial query beyond the simulated disk; counts there are undefined.
    #[error("radius {r} exceeds the simulated window r_max = {r_max}")]
    OutOfWindow { r: f64, r_max: f64 },

    /// Points beyond the simulated disk would contribute non-negligibly.
    #[error("truncation risk: {detail} (suggested r_max >= {suggested_r_max:.6e})")]
    TruncationRisk { detail: String, suggested_r_max: f64 },

    /// A mean measure vanished where a positive value is required.
    #[error("degenerate mean measure: {0}")]
    DegenerateMeasure(String),

    /// Too few observations for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A model combination outside the supported families.
    #[error("unsupported model: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
