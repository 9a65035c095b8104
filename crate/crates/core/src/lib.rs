//! Evaluation and training of recommender systems on selectively observed
//! (missing-not-at-random) rating data.
//!
//! Ratings revealed by users are a biased sample: entries a user likes are
//! observed far more often than entries they do not. This crate treats the
//! reveal process as a probabilistic assignment mechanism with per-entry
//! *propensities* and provides, on top of that model:
//!
//! * exact risk computation for pointwise (MAE, MSE, accuracy) and ranking
//!   (CG, DCG, DCG@k, PREC@k) losses over fully known matrices ([`loss`]),
//! * the Naive, inverse-propensity-scored (IPS) and self-normalized IPS
//!   (SNIPS) risk estimators, plus an exact-expectation enumeration oracle
//!   for small instances ([`estimators`]),
//! * tail/generalization bound calculators and the bias of IPS under
//!   misspecified propensities ([`bounds`]),
//! * propensity estimation for the observational setting: uniform baseline,
//!   Naive Bayes from an auxiliary uniformly-sampled rating set, and
//!   logistic regression on pair features ([`propensity`]),
//! * propensity-weighted matrix factorization with L2 regularization,
//!   trained by full-batch L-BFGS, with IPS-scored cross-validation
//!   ([`factorization`]),
//! * semi-synthetic ground-truth construction and the rating-dependent
//!   observation model used by the experiment harness ([`synthdata`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); all randomized
//! routines take explicit seeds and produce identical streams on every
//! platform. IO, file formats and the batch CLI live in the companion
//! `proprec-cli` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod bounds;
pub mod estimators;
pub mod factorization;
pub mod loss;
pub mod matrix;
pub mod propensity;
pub mod synthdata;

mod error;
mod math;
mod optimize;
pub mod rng;

pub use error::Error;

/// Shorthand for results produced by this crate.
pub type Result<T> = core::result::Result<T, Error>;
