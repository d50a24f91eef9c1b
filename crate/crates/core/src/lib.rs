// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod donaldson;
pub mod energy;
pub mod error;
pub mod fiber;
pub mod flow;
pub mod gauge;
pub mod lattice;
pub mod rng;
pub mod snapshot;
pub mod stability;

pub use error::{Error, Result};
