//! AMR reading, writing and preprocessing.

mod penman;
mod prep;

pub use penman::*;
pub use prep::*;
