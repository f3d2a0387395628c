//! Direct estimation of the derivative of quadratic mutual information (QMI)
//! and its use for supervised dimension reduction.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiments;
mod linalg;
pub mod lsqmi;
pub mod lsqmid;
pub mod optimizer;
pub mod par;
pub mod synthetic;

pub use error::{Error, Result};
