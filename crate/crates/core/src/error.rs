use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("duplicate observation for {day} slot {slot}")]
    Conflict { day: NaiveDate, slot: usize },
    #[error("day {day} has {found} of {expected} slots")]
    PartialDay {
        day: NaiveDate,
        found: usize,
        expected: usize,
    },
    #[error("no strictly positive price in the series")]
    Unrecoverable,
    #[error("expected at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("slot count mismatch: panel has {panel}, profile has {profile}")]
    SlotMismatch { panel: usize, profile: usize },
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),
    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("schema mismatch; missing columns: {}", .missing.join(", "))]
    SchemaMismatch { missing: Vec<String> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("optimizer did not converge after {iterations} iterations (best objective {best})")]
    NoConvergence {
        iterations: usize,
        best: f64,
        params: Vec<f64>,
    },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("unparseable rating response: {0:?}")]
    UnparseableRating(String),
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("overlapping rating periods: {0} and {1}")]
    OverlappingPeriods(String, String),
}
