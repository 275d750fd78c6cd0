//! Graph-to-sequence learning with gated graph neural networks.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, the command line and anything touching the
//! filesystem live in the companion `g2s` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod amr;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nmt;
pub mod search;
pub mod tensor;
pub mod train;
