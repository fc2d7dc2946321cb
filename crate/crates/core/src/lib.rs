// Checks written as `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod cli;
pub mod coherent;
pub mod error;
pub mod forward;
pub mod lie;
pub mod optimizer;
pub mod state;

pub use error::{Error, Result};
