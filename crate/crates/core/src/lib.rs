#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diff_analysis;
pub mod diff_sim;
pub mod error;
pub mod harness;
pub mod jump_analysis;
pub mod jump_sim;
pub mod kernels;
pub mod model;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod schwartz;

pub use error::{Error, Result};
