//! File formats, the training driver and the `g2s` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod gradcheck;
pub mod interchange;
pub mod preprocess;
pub mod trainer;
pub mod translate;

/// Invalid input or a failed check (exit code 1), as opposed to a runtime
/// failure (exit code 2).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);
