// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cca;
pub mod codes;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod preprocess;
pub mod pipeline;
pub mod reconvolution;
pub mod report;
pub mod simulator;
pub mod stimulus;

pub use error::{Error, Result};
