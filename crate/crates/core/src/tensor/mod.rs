//! Dense row-major matrices with reverse-mode differentiation.
//!
//! Everything is two dimensional: vectors are `1 x n` rows. Values live on a
//! [`Tape`], which records each operation so that [`Tape::backward`] can
//! replay the gradient rules in reverse.

mod adam;
mod gradcheck;
mod init;
mod params;
mod real;
mod suite;
mod tape;

pub use adam::{clip_global_norm, Adam, AdamConfig, OptimError};
pub use gradcheck::{
    finite_difference_check, relative_error, GradCheckConfig, GradCheckError, GradCheckReport,
};
pub use init::{xavier_bound, xavier_uniform};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use real::Real;
pub use suite::{check_primitives, primitive_names};
pub use tape::{log_softmax_rows, Fault, Gradients, Tape, TensorError, Var};
