//! Monthly agricultural commodity price forecasting: data model and
//! validation, feature assembly under a strict information cutoff,
//! from-scratch regressors, retrospective screening, rolling forecasts
//! and model explanations.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_model;
pub mod error;
pub mod explain;
pub mod fixture;
pub mod forecasting;
pub mod model_zoo;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod screening;
pub mod stats;
pub mod time;
pub mod transform;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use time::YearMonth;
