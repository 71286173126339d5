//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by sampling, generation, scoring, fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or concentration parameter violates its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Tables or vectors passed together do not agree in shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation received input it cannot act on.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Unsmoothed KL is infinite because the reference puts mass where the
    /// candidate has an empty cell.
    #[error(
        "infinite KL divergence at item {item}, category {category}: \
         candidate frequency is 0 where reference is positive (use smoothing > 0)"
    )]
    InfiniteDivergence { item: usize, category: usize },

    /// Too few replicates for the requested interval.
    #[error("insufficient replicates: need at least {needed}, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    /// A diagnostic that is undefined for the given configuration.
    #[error("undefined diagnostic: {0}")]
    UndefinedDiagnostic(String),

    /// Malformed input data (CSV, config). Line is 1-based where known.
    #[error("format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, msg: String },

    /// A category never observed in the dataset; the fit cannot identify it.
    #[error("degenerate category {name:?} (index {index}): zero total count; drop it before fitting")]
    DegenerateCategory { index: usize, name: String },

    /// A grid cell that was marked skipped cannot be executed.
    #[error("cell skipped: {0}")]
    CellSkipped(String),

    /// Invalid sweep specification.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
