//! Stage 3: rolling one-step-ahead forecasts on the screened frames,
//! recursive multi-step ARIMA forecasts on the monthly change series, the
//! historical-mean baseline, and per-cell winners.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data_model::MonthlyChanges;
use crate::error::{Error, Result};
use crate::model_zoo::{fit, grid_search, ArimaModel, ArimaOrder, ModelSpec, ARIMA_MIN_OBS};
use crate::par;
use crate::rng::derive_seed;
use crate::stats::{compute_metrics, MetricsRow};
use crate::time::YearMonth;
use crate::transform::{issuance, FeatureFrame};

pub const DEFAULT_T_MIN: usize = 44;
/// Longest recursion: a 12-month horizon plus the month that separates the
/// last observable change from the issuance month.
pub const MAX_TS_STEPS: usize = 13;
pub const NAIVE: &str = "naive";
pub const TS_DATASET: &str = "monthly";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub commodity: String,
    pub target_year: i32,
    pub target_month: u8,
    pub horizon: u8,
    pub model: String,
    pub dataset: String,
    pub predicted: f64,
    /// Absent for the final, future iteration.
    pub observed: Option<f64>,
    /// Training rows (years for frame models, months for ARIMA).
    pub train_size: usize,
}

impl ForecastRecord {
    fn key(&self) -> (u8, u8, &str, &str, i32) {
        (self.target_month, self.horizon, &self.model, &self.dataset, self.target_year)
    }
}

/// Sort records into their canonical output order.
pub fn sort_records(records: &mut [ForecastRecord]) {
    records.sort_by(|a, b| a.key().cmp(&b.key()));
}

/// Iterations of a rolling evaluation over `n` rows: (training rows, row
/// to predict or `None` for the forecast row).
fn rolling_plan(frame: &FeatureFrame, t_min: usize) -> Result<Vec<(usize, Option<usize>)>> {
    let n = frame.n_rows();
    if t_min < 2 {
        return Err(Error::contract("T_min must be at least 2"));
    }
    if n < t_min {
        return Err(Error::Stage(format!(
            "{} m={} h={}: {n} rows, fewer than T_min = {t_min}",
            frame.dataset, frame.month, frame.horizon
        )));
    }
    let mut plan: Vec<(usize, Option<usize>)> = (t_min..n).map(|t| (t, Some(t))).collect();
    if frame.forecast.is_some() {
        plan.push((n, None));
    }
    Ok(plan)
}

fn target_of(frame: &FeatureFrame, row: Option<usize>) -> (i32, Option<f64>) {
    match row {
        Some(r) => (frame.years[r], Some(frame.target[r])),
        None => (frame.forecast.as_ref().expect("planned").year, None),
    }
}

/// Expanding-window forecasts: for T = T_min, T_min+1, ... fit on the
/// first T rows (tuned by inner grid search) and predict the next row;
/// the last iteration predicts the forecast row.
pub fn rolling_forecast(
    frame: &FeatureFrame,
    spec: &ModelSpec,
    t_min: usize,
    inner_folds: usize,
) -> Result<Vec<ForecastRecord>> {
    let plan = rolling_plan(frame, t_min)?;
    let out = par::map(&plan, |&(t, row)| -> Result<ForecastRecord> {
        let train: Vec<usize> = (0..t).collect();
        let (x, y) = frame.subset(&train);
        let (year, observed) = target_of(frame, row);
        let seed = derive_seed(spec.seed, &[year as u64]);
        let tuned = ModelSpec { seed, ..spec.clone() };
        let best = grid_search(&tuned, &x, &y, inner_folds)?.best;
        let model = fit(spec.family, &best, seed, &x, &y)?;
        let features = match row {
            Some(r) => frame.row(r),
            None => frame.forecast.as_ref().expect("planned").values.clone(),
        };
        let predicted = model.predict_row(&features);
        if !predicted.is_finite() {
            return Err(Error::Fit(format!("{} predicted {predicted} for {year}", spec.family)));
        }
        Ok(ForecastRecord {
            commodity: frame.commodity.clone(),
            target_year: year,
            target_month: frame.month,
            horizon: frame.horizon,
            model: spec.family.as_str().to_string(),
            dataset: frame.dataset.clone(),
            predicted,
            observed,
            train_size: t,
        })
    });
    out.into_iter().collect()
}

/// Mean of the training targets.
pub fn naive_forecast(train: &[f64]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::contract("naive forecast needs at least one training value"));
    }
    Ok(crate::stats::linalg::mean(train))
}

/// Historical-mean baseline over the same rolling plan as
/// [`rolling_forecast`].
pub fn naive_rolling(frame: &FeatureFrame, t_min: usize) -> Result<Vec<ForecastRecord>> {
    rolling_plan(frame, t_min)?
        .into_iter()
        .map(|(t, row)| {
            let (year, observed) = target_of(frame, row);
            Ok(ForecastRecord {
                commodity: frame.commodity.clone(),
                target_year: year,
                target_month: frame.month,
                horizon: frame.horizon,
                model: NAIVE.into(),
                dataset: frame.dataset.clone(),
                predicted: naive_forecast(&frame.target[..t])?,
                observed,
                train_size: t,
            })
        })
        .collect()
}

/// Iterate one-step forecasts `steps` times, appending each prediction to
/// the model's history before the next step.
pub fn recursive_forecast(model: &ArimaModel, steps: usize) -> Result<Vec<f64>> {
    if !(1..=MAX_TS_STEPS).contains(&steps) {
        return Err(Error::contract(format!("steps {steps} outside 1..={MAX_TS_STEPS}")));
    }
    let mut m = model.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = m.forecast(1)[0];
        m.history.push(next);
        out.push(next);
    }
    Ok(out)
}

/// Fit `order` on `series` and forecast `steps` values recursively.
pub fn recursive_ts_forecast(series: &[f64], order: ArimaOrder, steps: usize) -> Result<Vec<f64>> {
    if series.len() < ARIMA_MIN_OBS {
        return Err(Error::contract(format!(
            "time-series forecasting needs {ARIMA_MIN_OBS} observations, got {}",
            series.len()
        )));
    }
    recursive_forecast(&ArimaModel::fit_lenient(series, order)?, steps)
}

/// ARIMA fits keyed by the last month of their training series, shared
/// across cells that end training in the same month.
#[derive(Debug, Default)]
pub struct ArimaCache {
    fits: Mutex<BTreeMap<(ArimaOrder, YearMonth), std::result::Result<ArimaModel, String>>>,
}

impl ArimaCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&self, series: &MonthlyChanges, order: ArimaOrder, end: YearMonth) -> Result<ArimaModel> {
        if let Some(hit) = self.fits.lock().expect("cache lock").get(&(order, end)) {
            return hit.clone().map_err(Error::Fit);
        }
        let values: Vec<f64> = series.values.range(..=end).map(|(_, &v)| v).collect();
        let fitted = ArimaModel::fit_lenient(&values, order).map_err(|e| e.to_string());
        if let Ok(m) = &fitted {
            if !m.converged {
                log::debug!("event=arima_css_fallback order={order} end={end}");
            }
        }
        self.fits
            .lock()
            .expect("cache lock")
            .insert((order, end), fitted.clone());
        fitted.map_err(Error::Fit)
    }
}

/// The month of the last change observable for a target issued at
/// `issue`, given the last month of data.
pub fn ts_training_end(issue: YearMonth, last_data: YearMonth) -> YearMonth {
    issue.sub_months(1).min(last_data)
}

/// ARIMA records for the given target years of cell (m, h). Each target is
/// forecast recursively from the changes observable at its issuance.
#[allow(clippy::too_many_arguments)]
pub fn ts_rolling_forecast(
    commodity: &str,
    series: &MonthlyChanges,
    order: ArimaOrder,
    month: u8,
    horizon: u8,
    targets: &[(i32, Option<f64>)],
    cache: &ArimaCache,
) -> Result<Vec<ForecastRecord>> {
    let last_data = *series
        .values
        .keys()
        .next_back()
        .ok_or_else(|| Error::contract("empty monthly series"))?;
    let out = par::map(targets, |&(year, observed)| -> Result<ForecastRecord> {
        let target = YearMonth::new(year, month);
        let end = ts_training_end(issuance(year, month, horizon), last_data);
        let train_size = series.values.range(..=end).count();
        if train_size < ARIMA_MIN_OBS {
            return Err(Error::Stage(format!(
                "arima m={month} h={horizon} {year}: {train_size} monthly observations, need {ARIMA_MIN_OBS}"
            )));
        }
        let model = cache.get(series, order, end)?;
        let steps = (target.index() - end.index()) as usize;
        let path = recursive_forecast(&model, steps)?;
        Ok(ForecastRecord {
            commodity: commodity.to_string(),
            target_year: year,
            target_month: month,
            horizon,
            model: "arima".into(),
            dataset: TS_DATASET.into(),
            predicted: path[steps - 1],
            observed,
            train_size,
        })
    });
    out.into_iter().collect()
}

/// Target years (with observations) that a rolling evaluation of `frame`
/// produces, in order.
pub fn rolling_targets(frame: &FeatureFrame, t_min: usize) -> Result<Vec<(i32, Option<f64>)>> {
    Ok(rolling_plan(frame, t_min)?
        .into_iter()
        .map(|(_, row)| target_of(frame, row))
        .collect())
}

/// Metrics of one model over the observed records of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub month: u8,
    pub horizon: u8,
    pub model: String,
    pub dataset: String,
    pub metrics: MetricsRow,
}

/// Metrics per (m, h, model, dataset) over the observed records.
pub fn score_records(records: &[ForecastRecord]) -> Result<Vec<ModelScore>> {
    let mut groups: BTreeMap<(u8, u8, &str, &str), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if let Some(o) = r.observed {
            let g = groups
                .entry((r.target_month, r.horizon, &r.model, &r.dataset))
                .or_default();
            g.0.push(o);
            g.1.push(r.predicted);
        }
    }
    groups
        .into_iter()
        .map(|((month, horizon, model, dataset), (obs, pred))| {
            Ok(ModelScore {
                month,
                horizon,
                model: model.to_string(),
                dataset: dataset.to_string(),
                metrics: compute_metrics(&obs, &pred)?,
            })
        })
        .collect()
}

/// Lowest MAE per (m, h); ties by RMSE, then model name. The baseline is
/// not eligible.
pub fn best_model_per_cell(scores: &[ModelScore]) -> BTreeMap<(u8, u8), ModelScore> {
    let mut best: BTreeMap<(u8, u8), ModelScore> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.model != NAIVE) {
        let key = (s.month, s.horizon);
        let better = match best.get(&key) {
            None => true,
            Some(b) => s
                .metrics
                .mae
                .total_cmp(&b.metrics.mae)
                .then(s.metrics.rmse.total_cmp(&b.metrics.rmse))
                .then_with(|| s.model.cmp(&b.model))
                .is_lt(),
        };
        if better {
            best.insert(key, s.clone());
        }
    }
    best
}

/// `commodity,target_year,target_month,horizon,model,dataset,predicted,observed,T`
pub fn write_forecasts_csv<W: Write>(records: &[ForecastRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "commodity",
        "target_year",
        "target_month",
        "horizon",
        "model",
        "dataset",
        "predicted",
        "observed",
        "T",
    ])?;
    for r in records {
        out.write_record([
            r.commodity.clone(),
            r.target_year.to_string(),
            r.target_month.to_string(),
            r.horizon.to_string(),
            r.model.clone(),
            r.dataset.clone(),
            r.predicted.to_string(),
            r.observed.map(|v| v.to_string()).unwrap_or_default(),
            r.train_size.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_forecasts_csv<R: std::io::Read>(r: R) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |j: usize, name: &str| -> Result<&str> {
            row.get(j).ok_or_else(|| Error::Parse {
                file: "forecasts.csv".into(),
                row: i + 2,
                column: name.into(),
                message: "missing field".into(),
            })
        };
        let parse = |j: usize, name: &str| -> Result<f64> {
            field(j, name)?.parse().map_err(|e| Error::Parse {
                file: "forecasts.csv".into(),
                row: i + 2,
                column: name.into(),
                message: format!("{e}"),
            })
        };
        let observed = match field(7, "observed")? {
            "" => None,
            _ => Some(parse(7, "observed")?),
        };
        out.push(ForecastRecord {
            commodity: field(0, "commodity")?.to_string(),
            target_year: parse(1, "target_year")? as i32,
            target_month: parse(2, "target_month")? as u8,
            horizon: parse(3, "horizon")? as u8,
            model: field(4, "model")?.to_string(),
            dataset: field(5, "dataset")?.to_string(),
            predicted: parse(6, "predicted")?,
            observed,
            train_size: parse(8, "T")? as usize,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
