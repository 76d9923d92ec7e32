#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod ltv;
pub mod neural;
pub mod rng;
pub mod tangent;

pub use error::{Error, Result};
