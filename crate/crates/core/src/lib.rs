//! Matrix-free estimation of matrix-based Rényi entropy, mutual information
//! and total correlation.

// `!(x > 0.0)` is used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod kernel;
pub mod lanczos;
pub mod linalg;
pub mod lowrank;
pub mod measures;
pub mod oracle;
pub mod poly;
pub mod sketch;
pub mod special;

pub use error::{Error, Result};
