use alloc::boxed::Box;
use alloc::string::String;

use crate::factorization::FactorModel;

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_users}x{expected_items}, got {got_users}x{got_items}")]
    DimensionMismatch {
        expected_users: usize,
        expected_items: usize,
        got_users: usize,
        got_items: usize,
    },

    #[error("entry ({user}, {item}) out of range for {users}x{items} matrix")]
    IndexOutOfRange {
        user: usize,
        item: usize,
        users: usize,
        items: usize,
    },

    #[error("duplicate observation for entry ({user}, {item})")]
    DuplicateEntry { user: usize, item: usize },

    #[error("rating {value} outside scale {min}..={max}")]
    OffScaleRating { value: f64, min: u32, max: u32 },

    #[error("propensity {value} at ({user}, {item}) not in (0, 1]")]
    InvalidPropensity {
        user: usize,
        item: usize,
        value: f64,
    },

    #[error("{estimator} estimator undefined: no observed entries")]
    UndefinedEstimate { estimator: &'static str },

    #[error("exact expectation over {cells} cells exceeds limit of {max}")]
    InstanceTooLarge { cells: usize, max: usize },

    #[error("observation model infeasible: top-rating propensity {k} exceeds 1")]
    InfeasibleObservationModel { k: f64 },

    #[error("cannot flip {needed} one-cells to five: only {available} available")]
    InsufficientFlippable { needed: usize, available: usize },

    #[error("invalid recommendation: {reason}")]
    InvalidRecommendation { reason: String },

    #[error("cross-validation fold {fold} is empty")]
    EmptyFold { fold: usize },

    #[error("feature vector length {got} does not match model dimension {expected}")]
    FeatureDimMismatch { expected: usize, got: usize },

    #[error("optimization diverged: objective or gradient became non-finite")]
    Diverged {
        /// Last iterate with a finite objective, for post-mortem inspection.
        last_model: Box<FactorModel>,
    },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}
