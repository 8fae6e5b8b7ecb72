use serde::{Deserialize, Serialize};

use super::linalg::{median, pop_sd};
use crate::error::{Error, Result};

/// The six evaluation metrics plus the sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mae: f64,
    pub mad: f64,
    /// Percent; `None` when any observed value is 0.
    pub mape: Option<f64>,
    pub mse: f64,
    pub rmse: f64,
    /// `1 - RMSE / sd(observed)` with the population sd; `None` when the
    /// observations are constant.
    pub ra: Option<f64>,
    pub n: usize,
}

impl MetricsRow {
    /// Ranking sum used to compare options: MAE + MAD + RMSE.
    pub fn error_sum(&self) -> f64 {
        self.mae + self.mad + self.rmse
    }
}

fn check(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() {
        return Err(Error::contract(format!(
            "observed has {} values, predicted {}",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::contract("metrics need at least one pair"));
    }
    Ok(())
}

pub fn compute_metrics(observed: &[f64], predicted: &[f64]) -> Result<MetricsRow> {
    check(observed, predicted)?;
    let n = observed.len() as f64;
    let abs: Vec<f64> = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).abs())
        .collect();
    let mae = abs.iter().sum::<f64>() / n;
    let mse = abs.iter().map(|e| e * e).sum::<f64>() / n;
    let rmse = mse.sqrt();
    let mape = if observed.contains(&0.0) {
        None
    } else {
        Some(
            observed
                .iter()
                .zip(&abs)
                .map(|(o, e)| (e / o).abs())
                .sum::<f64>()
                / n
                * 100.0,
        )
    };
    Ok(MetricsRow {
        mae,
        mad: median(&abs),
        mape,
        mse,
        rmse,
        ra: ra_from(observed, rmse),
        n: observed.len(),
    })
}

fn ra_from(observed: &[f64], rmse: f64) -> Option<f64> {
    let sd = pop_sd(observed);
    if sd > 0.0 {
        Some(1.0 - rmse / sd)
    } else {
        None
    }
}

/// `1 - RMSE / sd(observed)`; 0 for the constant mean-of-observed predictor
/// and 1 for a perfect one.
pub fn relative_advantage(observed: &[f64], predicted: &[f64]) -> Result<Option<f64>> {
    Ok(compute_metrics(observed, predicted)?.ra)
}
