use serde::{Deserialize, Serialize};

use super::linalg::lstsq;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Response-surface coefficients for ADF critical values with a constant
/// and no trend: `tau(T) = b0 + b1/T + b2/T^2 + b3/T^3`.
/// Source: J. G. MacKinnon (2010), "Critical Values for Cointegration
/// Tests", Queen's Economics Department Working Paper No. 1227, Table 2,
/// N = 1, case "c".
const TAU_CONSTANT: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

pub const ADF_MIN_LENGTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags_used: usize,
    pub nobs: usize,
    /// Critical value at the requested level (named for the default 5%).
    pub critical_5pct: f64,
    pub reject_unit_root: bool,
}

/// Critical value of the constant-only ADF test at level `alpha` (one of
/// 0.01, 0.05, 0.10) for a regression on `nobs` observations.
pub fn adf_critical_value(alpha: f64, nobs: usize) -> Result<f64> {
    let (_, b) = TAU_CONSTANT
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .ok_or_else(|| Error::contract(format!("no tabulated critical value for alpha={alpha}")))?;
    let t = nobs as f64;
    Ok(b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

/// Regression `dy_t = a + g y_{t-1} + sum_i c_i dy_{t-i}` over
/// `t in start..n`; returns (RSS, t statistic of g, nobs).
fn adf_regression(y: &[f64], dy: &[f64], lags: usize, start: usize) -> Result<(f64, f64, usize)> {
    // dy[t-1] = y[t] - y[t-1]
    let rows: Vec<usize> = (start..y.len()).collect();
    let nobs = rows.len();
    let k = lags + 2;
    let x = DMatrix::from_fn(nobs, k, |i, j| {
        let t = rows[i];
        match j {
            0 => 1.0,
            1 => y[t - 1],
            _ => dy[t - 1 - (j - 1)],
        }
    });
    let target: Vec<f64> = rows.iter().map(|&t| dy[t - 1]).collect();
    let fit = lstsq(&x, &target)?;
    let dof = nobs as f64 - k as f64;
    let sigma2 = fit.rss / dof;
    let se = (sigma2 * fit.xtx_inv_diag[1]).sqrt();
    Ok((fit.rss, fit.coef[1] / se, nobs))
}

/// Augmented Dickey-Fuller test with drift. The lag order minimizes AIC
/// over `0..=floor(12 (n/100)^(1/4))` on a common sample, then the chosen
/// regression is re-run on its full sample.
pub fn adf_test(series: &[f64], alpha: f64) -> Result<AdfResult> {
    let n = series.len();
    if n < ADF_MIN_LENGTH {
        return Err(Error::contract(format!("ADF needs at least {ADF_MIN_LENGTH} values, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ADF input contains non-finite values".into()));
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::Degenerate("ADF input is constant".into()));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let mut max_lag = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    // keep enough degrees of freedom on the common sample
    while max_lag > 0 && n - 1 - max_lag < max_lag + 2 + 10 {
        max_lag -= 1;
    }

    let mut best: Option<(usize, f64)> = None;
    for lags in 0..=max_lag {
        let (rss, _, nobs) = match adf_regression(series, &dy, lags, max_lag + 1) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let aic = nobs as f64 * (rss.max(f64::MIN_POSITIVE) / nobs as f64).ln() + 2.0 * (lags + 2) as f64;
        if best.is_none_or(|(_, a)| aic < a) {
            best = Some((lags, aic));
        }
    }
    let (lags, _) = best.ok_or_else(|| Error::Degenerate("no ADF regression could be fitted".into()))?;
    let (_, statistic, nobs) = adf_regression(series, &dy, lags, lags + 1)?;
    if !statistic.is_finite() {
        return Err(Error::Degenerate("ADF statistic is not finite".into()));
    }
    let critical = adf_critical_value(alpha, nobs)?;
    Ok(AdfResult {
        statistic,
        lags_used: lags,
        nobs,
        critical_5pct: critical,
        reject_unit_root: statistic < critical,
    })
}
