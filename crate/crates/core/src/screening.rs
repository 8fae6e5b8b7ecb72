//! Stage 2: leave-one-year-out evaluation of every (model, dataset)
//! option, selection of the two best, error-based weighting and
//! aggregation of their importances into a retained feature list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_zoo::{fit, grid_search, Family, ModelSpec, Params};
use crate::par;
use crate::rng::{derive_seed, tag};
use crate::stats::{compute_metrics, MetricsRow};
use crate::transform::{ColumnSource, FeatureFrame};

pub const DEFAULT_RETAIN: usize = 19;
pub const MIN_LOOCV_ROWS: usize = 10;

/// One held-out year of one option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvRecord {
    pub year: i32,
    pub model: Family,
    pub dataset: String,
    /// Absent when the fold failed to fit.
    pub predicted: Option<f64>,
    pub observed: f64,
    pub params: Option<Params>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvOutcome {
    pub records: Vec<LoocvRecord>,
    /// Intrinsic importance of every successful fold, keyed by feature.
    pub importances: Vec<BTreeMap<String, f64>>,
}

/// Fit on all years but one (tuning by inner k-fold grid search) and
/// predict the held-out year, for every year of the frame.
pub fn loocv_evaluate(
    frame: &FeatureFrame,
    spec: &ModelSpec,
    inner_folds: usize,
    max_failure_fraction: f64,
) -> Result<LoocvOutcome> {
    let n = frame.n_rows();
    if n < MIN_LOOCV_ROWS {
        return Err(Error::contract(format!(
            "LOOCV needs at least {MIN_LOOCV_ROWS} rows, frame has {n}"
        )));
    }
    let folds = par::map_range(n, |held| {
        let train: Vec<usize> = (0..n).filter(|&r| r != held).collect();
        let (x, y) = frame.subset(&train);
        let fold_spec = ModelSpec {
            seed: derive_seed(spec.seed, &[frame.years[held] as u64]),
            ..spec.clone()
        };
        let fitted = grid_search(&fold_spec, &x, &y, inner_folds.min(y.len()))
            .and_then(|g| fit(spec.family, &g.best, fold_spec.seed, &x, &y).map(|m| (g.best, m)));
        match fitted {
            Ok((params, model)) => {
                let pred = model.predict_row(&frame.row(held));
                let ok = pred.is_finite();
                (
                    LoocvRecord {
                        year: frame.years[held],
                        model: spec.family,
                        dataset: frame.dataset.clone(),
                        predicted: ok.then_some(pred),
                        observed: frame.target[held],
                        params: Some(params),
                    },
                    ok.then_some(model.importance),
                )
            }
            Err(e) => {
                log::debug!(
                    "event=loocv_fold_failed model={} dataset={} year={} reason={e}",
                    spec.family,
                    frame.dataset,
                    frame.years[held]
                );
                (
                    LoocvRecord {
                        year: frame.years[held],
                        model: spec.family,
                        dataset: frame.dataset.clone(),
                        predicted: None,
                        observed: frame.target[held],
                        params: None,
                    },
                    None,
                )
            }
        }
    });
    let failures = folds.iter().filter(|(r, _)| r.predicted.is_none()).count();
    if failures as f64 > max_failure_fraction * n as f64 {
        return Err(Error::Fit(format!(
            "{} on {}: {failures} of {n} folds failed",
            spec.family, frame.dataset
        )));
    }
    let (records, importances): (Vec<_>, Vec<_>) = folds.into_iter().unzip();
    Ok(LoocvOutcome {
        records,
        importances: importances.into_iter().flatten().collect(),
    })
}

/// Summary of one evaluated (model, dataset) option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionScore {
    pub model: Family,
    pub dataset: String,
    pub metrics: MetricsRow,
    pub error_sum: f64,
    pub failures: usize,
}

impl OptionScore {
    pub fn from_records(model: Family, dataset: &str, records: &[LoocvRecord]) -> Result<Self> {
        let (obs, pred): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter_map(|r| r.predicted.map(|p| (r.observed, p)))
            .unzip();
        let metrics = compute_metrics(&obs, &pred)?;
        Ok(Self {
            model,
            dataset: dataset.to_string(),
            error_sum: metrics.error_sum(),
            metrics,
            failures: records.len() - obs.len(),
        })
    }
}

/// Indices of the two options with the lowest error sum (MAE + MAD +
/// RMSE); ties by MAE, then by (model, dataset).
pub fn select_top_two(options: &[OptionScore]) -> Result<(usize, usize)> {
    if options.len() < 2 {
        return Err(Error::contract(format!(
            "need at least 2 evaluated options, got {}",
            options.len()
        )));
    }
    let mut idx: Vec<usize> = (0..options.len()).collect();
    idx.sort_by(|&a, &b| {
        let (oa, ob) = (&options[a], &options[b]);
        oa.error_sum
            .total_cmp(&ob.error_sum)
            .then(oa.metrics.mae.total_cmp(&ob.metrics.mae))
            .then_with(|| (oa.model.as_str(), &oa.dataset).cmp(&(ob.model.as_str(), &ob.dataset)))
    });
    Ok((idx[0], idx[1]))
}

/// `w_i = e_other / (e1 + e2)`: the option with the smaller error gets the
/// larger weight. (A `1/e` normalization would be the other obvious reading.)
pub fn model_weights(e1: f64, e2: f64) -> Result<(f64, f64)> {
    if !(e1 >= 0.0 && e2 >= 0.0) {
        return Err(Error::contract(format!("error sums must be non-negative, got ({e1}, {e2})")));
    }
    let total = e1 + e2;
    if total == 0.0 {
        return Ok((0.5, 0.5));
    }
    Ok((e2 / total, e1 / total))
}

/// Min-max scale one importance vector after clamping negative or
/// non-finite values to 0. A constant vector scales to all zeros.
pub fn min_max_scale(raw: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let clean: BTreeMap<&String, f64> = raw
        .iter()
        .map(|(k, &v)| (k, if v.is_finite() && v > 0.0 { v } else { 0.0 }))
        .collect();
    let lo = clean.values().copied().fold(f64::INFINITY, f64::min);
    let hi = clean.values().copied().fold(f64::NEG_INFINITY, f64::max);
    clean
        .into_iter()
        .map(|(k, v)| {
            let s = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            (k.clone(), s)
        })
        .collect()
}

/// Mean over all iterations of both options of the weighted, min-max
/// scaled importances. `features` is the universe of names; a feature
/// missing from an iteration counts as 0 there.
pub fn aggregate_importance(
    options: &[(&[BTreeMap<String, f64>], f64)],
    features: &BTreeSet<String>,
) -> BTreeMap<String, f64> {
    let mut sum: BTreeMap<String, f64> = features.iter().map(|f| (f.clone(), 0.0)).collect();
    let mut count = 0usize;
    for (iterations, weight) in options {
        for imp in iterations.iter() {
            count += 1;
            for (k, v) in min_max_scale(imp) {
                if let Some(s) = sum.get_mut(&k) {
                    *s += weight * v;
                }
            }
        }
    }
    if count > 0 {
        sum.values_mut().for_each(|v| *v /= count as f64);
    }
    sum
}

/// Top `k` features by importance; ties go to the lexicographically
/// smaller name.
pub fn retain_top(importance: &BTreeMap<String, f64>, k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    let mut ranked: Vec<(&String, f64)> = importance.iter().map(|(n, &v)| (n, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(n, _)| n.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedOption {
    pub model: Family,
    pub dataset: String,
    pub error_sum: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedOption {
    pub model: Family,
    pub dataset: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub commodity: String,
    pub month: u8,
    pub horizon: u8,
    pub options: Vec<OptionScore>,
    pub failed_options: Vec<FailedOption>,
    pub selected: Vec<SelectedOption>,
    pub importance: BTreeMap<String, f64>,
    pub retained: Vec<String>,
    /// Provenance of each retained feature.
    pub sources: BTreeMap<String, ColumnSource>,
    pub records: Vec<LoocvRecord>,
}

impl ScreeningResult {
    /// Sources of the retained features, in retained order.
    pub fn retained_sources(&self) -> Vec<ColumnSource> {
        self.retained.iter().map(|n| self.sources[n].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningOptions {
    pub inner_folds: usize,
    pub max_failure_fraction: f64,
    pub retain_top: usize,
}

impl Default for ScreeningOptions {
    fn default() -> Self {
        Self {
            inner_folds: 5,
            max_failure_fraction: 0.2,
            retain_top: DEFAULT_RETAIN,
        }
    }
}

/// Screen one (m, h) cell: evaluate every spec on every frame, keep the two
/// best options and retain the top features of their weighted importances.
pub fn screen_cell(frames: &[FeatureFrame], specs: &[ModelSpec], opts: &ScreeningOptions) -> Result<ScreeningResult> {
    let first = frames.first().ok_or_else(|| Error::contract("no frames to screen"))?;
    let jobs: Vec<(&FeatureFrame, ModelSpec)> = frames
        .iter()
        .flat_map(|f| {
            specs.iter().map(move |s| {
                let seed = derive_seed(
                    s.seed,
                    &[f.month as u64, f.horizon as u64, tag(&f.dataset), tag(s.family.as_str())],
                );
                (f, ModelSpec { seed, ..s.clone() })
            })
        })
        .collect();
    let outcomes = par::map(&jobs, |(frame, spec)| {
        loocv_evaluate(frame, spec, opts.inner_folds, opts.max_failure_fraction)
    });

    let mut options = Vec::new();
    let mut iterations = Vec::new();
    let mut failed_options = Vec::new();
    let mut records = Vec::new();
    for ((frame, spec), outcome) in jobs.iter().zip(outcomes) {
        match outcome.and_then(|o| {
            OptionScore::from_records(spec.family, &frame.dataset, &o.records).map(|s| (s, o))
        }) {
            Ok((score, o)) => {
                options.push(score);
                iterations.push((o.importances, *frame));
                records.extend(o.records);
            }
            Err(e) => {
                log::warn!(
                    "event=option_failed m={} h={} model={} dataset={} reason={e}",
                    frame.month,
                    frame.horizon,
                    spec.family,
                    frame.dataset
                );
                failed_options.push(FailedOption {
                    model: spec.family,
                    dataset: frame.dataset.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let (a, b) = select_top_two(&options).map_err(|e| {
        Error::Stage(format!("m={} h={}: {e}", first.month, first.horizon))
    })?;
    let (w1, w2) = model_weights(options[a].error_sum, options[b].error_sum)?;

    let mut features = BTreeSet::new();
    let mut sources = BTreeMap::new();
    for &i in &[a, b] {
        for c in &iterations[i].1.columns {
            features.insert(c.name.clone());
            sources.entry(c.name.clone()).or_insert_with(|| c.source.clone());
        }
    }
    let importance = aggregate_importance(
        &[(&iterations[a].0, w1), (&iterations[b].0, w2)],
        &features,
    );
    let retained = retain_top(&importance, opts.retain_top)?;
    sources.retain(|k, _| retained.contains(k));

    let selected = vec![
        SelectedOption {
            model: options[a].model,
            dataset: options[a].dataset.clone(),
            error_sum: options[a].error_sum,
            weight: w1,
        },
        SelectedOption {
            model: options[b].model,
            dataset: options[b].dataset.clone(),
            error_sum: options[b].error_sum,
            weight: w2,
        },
    ];
    records.sort_by(|x, y| {
        (x.dataset.as_str(), x.model.as_str(), x.year).cmp(&(y.dataset.as_str(), y.model.as_str(), y.year))
    });
    Ok(ScreeningResult {
        commodity: first.commodity.clone(),
        month: first.month,
        horizon: first.horizon,
        options,
        failed_options,
        selected,
        importance,
        retained,
        sources,
        records,
    })
}

#[cfg(test)]
mod tests;
