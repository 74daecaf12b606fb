//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DkgError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expected {expected} representation, found {found}")]
    ReprMismatch { expected: &'static str, found: &'static str },

    #[error("component mismatch: {0}")]
    ComponentMismatch(String),

    #[error("{0} is not an admissible dyadic block")]
    NotDyadic(f64),

    #[error("frequency {0:?} is not on the grid's Fourier lattice")]
    OffLattice([f64; 3]),

    #[error("time window too short: {0}")]
    WindowTooShort(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("evolution unstable at t = {t}: {detail}")]
    Unstable { t: f64, detail: String },

    #[error("iteration stalled: {0}")]
    Stalled(String),

    #[error("config rejected: {0}")]
    Config(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DkgError>;
