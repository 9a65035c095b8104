//! File formats, experiment runners, and plumbing behind the `proprec`
//! binary. Everything here is std-side; the numerics live in the
//! `proprec` core crate.

pub mod config;
pub mod experiments;
pub mod matrix_io;
pub mod model_io;
pub mod report;
pub mod triplets;

mod error;

pub use error::CliError;

pub type Result<T> = std::result::Result<T, CliError>;
