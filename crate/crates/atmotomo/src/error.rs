//! Error type shared across the crate.

use thiserror::Error;

use crate::geometry::ExtentReport;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration input.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The extension half-width does not cover every shifted aperture copy.
    #[error("extension condition violated: {0}")]
    Extent(ExtentReport),

    /// Mismatched grid shapes, layer counts or domain tags.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The per-frequency decomposition requires all NGS or all LGS.
    #[error("operation requires a single guide-star kind (all NGS or all LGS)")]
    MixedStarKinds,

    /// A precomputed cache was built for a different system.
    #[error("cache mismatch: expected {expected}, found {found}")]
    CacheMismatch { expected: String, found: String },

    /// Non-finite values or other numerical breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Iterative solver residual grew past the divergence guard.
    #[error(
        "solver diverged at iteration {iteration}: residual {residual:.3e} \
         exceeds 10x the running minimum {minimum:.3e}"
    )]
    Diverged {
        iteration: usize,
        residual: f64,
        minimum: f64,
    },

    /// Malformed binary or CSV artifact.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
