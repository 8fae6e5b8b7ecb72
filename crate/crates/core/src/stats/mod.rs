//! Stationarity gate, collinearity tools and evaluation metrics.

mod adf;
mod collinearity;
pub mod linalg;
mod metrics;

pub use adf::{adf_critical_value, adf_test, AdfResult, ADF_MIN_LENGTH};
pub use collinearity::{
    alias_columns, alias_detect, correlation_columns, correlation_filter, ALIAS_TOL,
};
pub use metrics::{compute_metrics, relative_advantage, MetricsRow};
