//! Ratings ingestion, matrix-factorization completion, synthetic markets
//! and the protected-class probe audit.

mod factorization;
mod probe;
mod ratings;
mod synth;

pub use factorization::{
    complete_valuations, market_from_model, top_by_count, train_factorization, FactorizationModel,
    LossForm, TrainingConfig, TrainingReport,
};
pub use probe::{item_stereotype_scores, probe_auc, ProbeReport, StereotypeRanking};
pub use ratings::{load_ratings, parse_ratings, Rating, RatingsDataset};
pub use synth::{make_biased_market, synth_market};

use thiserror::Error;

use crate::market::MarketError;

/// Smallest completed valuation, keeping markets strictly positive.
pub const VALUATION_FLOOR: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("duplicate rating for user {user}, item {item}")]
    DuplicateRating { user: String, item: String },
    #[error("dataset has no ratings")]
    EmptyDataset,
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("synthetic markets need an even number of buyers, got {0}")]
    OddN(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("each split needs both labels")]
    DegenerateSplit,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}
