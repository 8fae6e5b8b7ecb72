//! Stage 4: model-agnostic attributions and diagnostics.

mod shapley;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use shapley::{shapley_exact, shapley_sampling, ShapleyAttribution, EXACT_MAX_FEATURES};

use crate::error::{Error, Result};
use crate::forecasting::ForecastRecord;
use crate::model_zoo::{Design, Family, Regressor, Tree, TreeParams};
use crate::par;
use crate::rng::{derive_seed, rng_from, shuffle, tag};
use crate::stats::linalg::{mean, median, pop_sd};
use crate::transform::FeatureFrame;

/// Median |phi| per feature over all instances, divided by the sum of the
/// medians (all zeros when every median is zero).
pub fn median_relative_influence(attributions: &[ShapleyAttribution]) -> Result<Vec<f64>> {
    let first = attributions
        .first()
        .ok_or_else(|| Error::contract("influence needs at least one attribution"))?;
    let k = first.phi.len();
    if attributions.iter().any(|a| a.phi.len() != k) {
        return Err(Error::contract("attributions have different widths"));
    }
    let medians: Vec<f64> = (0..k)
        .map(|j| median(&attributions.iter().map(|a| a.phi[j].abs()).collect::<Vec<_>>()))
        .collect();
    let total: f64 = medians.iter().sum();
    Ok(if total > 0.0 {
        medians.iter().map(|m| m / total).collect()
    } else {
        vec![0.0; k]
    })
}

fn rmse(model: &Regressor, x: &Design, y: &[f64]) -> Result<f64> {
    let pred = model.predict(x)?;
    let mse = pred.iter().zip(y).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// Mean RMSE increase when one column is shuffled, per feature. Each
/// (feature, repeat) shuffle has its own seeded stream.
pub fn permutation_importance(
    model: &Regressor,
    x: &Design,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    if repeats == 0 {
        return Err(Error::contract("repeats must be at least 1"));
    }
    if x.n_rows() != y.len() || y.is_empty() {
        return Err(Error::contract("design and target lengths differ or are empty"));
    }
    let base = rmse(model, x, y)?;
    let per_feature = par::map_range(x.n_cols(), |j| -> Result<f64> {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut rng = rng_from(seed, &[tag(&x.names()[j]), r as u64]);
            let mut col = x.column(j).to_vec();
            shuffle(&mut rng, &mut col);
            total += rmse(model, &x.with_column(j, col), y)? - base;
        }
        Ok(total / repeats as f64)
    });
    x.names()
        .iter()
        .cloned()
        .zip(per_feature)
        .map(|(n, v)| v.map(|v| (n, v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpBin {
    pub value: f64,
    pub phi: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: String,
    /// (feature value, phi) per instance.
    pub points: Vec<(f64, f64)>,
    /// Binned means joined piecewise-linearly, with a normal 95% band.
    pub curve: Vec<PdpBin>,
}

/// Quantile bins over the points sorted by value: rank i goes to bin
/// floor(i * bins / n), and equal values always share a bin.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut current_bin = usize::MAX;
    for (rank, &i) in idx.iter().enumerate() {
        let bin = rank * bins / n;
        let tied = rank > 0 && values[idx[rank - 1]] == values[i];
        if out.is_empty() || (bin != current_bin && !tied) {
            out.push(Vec::new());
            current_bin = bin;
        }
        out.last_mut().expect("pushed").push(i);
    }
    out
}

/// Shapley dependence curve for one feature from (value, phi) pairs.
pub fn pdp(feature: &str, values: &[f64], phi: &[f64], bins: usize) -> Result<PdpCurve> {
    if values.len() != phi.len() || values.is_empty() {
        return Err(Error::contract("values and phi must be non-empty and of equal length"));
    }
    if bins == 0 {
        return Err(Error::contract("bins must be at least 1"));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate(format!("feature {feature} is constant")));
    }
    let curve = quantile_bins(values, bins)
        .into_iter()
        .map(|group| {
            let v: Vec<f64> = group.iter().map(|&i| values[i]).collect();
            let p: Vec<f64> = group.iter().map(|&i| phi[i]).collect();
            let m = mean(&p);
            let se = if p.len() > 1 {
                crate::stats::linalg::sample_sd(&p) / (p.len() as f64).sqrt()
            } else {
                0.0
            };
            PdpBin {
                value: mean(&v),
                phi: m,
                lower: m - 1.96 * se,
                upper: m + 1.96 * se,
                count: p.len(),
            }
        })
        .collect();
    Ok(PdpCurve {
        feature: feature.to_string(),
        points: values.iter().copied().zip(phi.iter().copied()).collect(),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub depth: usize,
    pub tree: Tree,
    pub text: String,
    /// 1 - SSE/SST of the surrogate against the model's predictions.
    pub fidelity_r2: f64,
}

/// A cart (min_leaf 1, no complexity pruning) fitted to the model's own
/// predictions.
pub fn global_surrogate(model: &Regressor, x: &Design, depth: usize) -> Result<Surrogate> {
    if x.n_rows() == 0 {
        return Err(Error::contract("surrogate needs at least one row"));
    }
    let target = model.predict(x)?;
    let params = TreeParams {
        max_depth: depth,
        min_leaf: 1,
        cp: 0.0,
        mtry: None,
    };
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let tree = Tree::fit(x, &target, &rows, &params, None);
    let m = mean(&target);
    let sst: f64 = target.iter().map(|v| (v - m) * (v - m)).sum();
    let sse: f64 = rows
        .iter()
        .map(|&i| {
            let e = target[i] - tree.predict_row(&x.row(i));
            e * e
        })
        .sum();
    // a single leaf is the constant predictor: R² 0 by definition, not up
    // to the rounding of two differently summed means
    let fidelity_r2 = if sst > 0.0 && tree.n_leaves() > 1 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else if sst > 0.0 {
        0.0
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(Surrogate {
        depth,
        text: tree.export_text(x.names()),
        tree,
        fidelity_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualExtreme {
    pub residual: f64,
    pub target_year: i32,
    pub target_month: u8,
    pub horizon: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    /// 0 when the residuals are constant.
    pub lag1_autocorrelation: f64,
    pub min: ResidualExtreme,
    pub max: ResidualExtreme,
}

/// Residuals (observed - predicted) of the observed records, in target
/// order.
pub fn residual_analysis(records: &[ForecastRecord]) -> Result<ResidualSummary> {
    let mut obs: Vec<(&ForecastRecord, f64)> = records
        .iter()
        .filter_map(|r| r.observed.map(|o| (r, o - r.predicted)))
        .collect();
    if obs.len() < 2 {
        return Err(Error::contract(format!(
            "residual analysis needs at least 2 observed records, got {}",
            obs.len()
        )));
    }
    obs.sort_by_key(|(r, _)| (r.target_year, r.target_month, r.horizon));
    let res: Vec<f64> = obs.iter().map(|(_, e)| *e).collect();
    let m = mean(&res);
    let denom: f64 = res.iter().map(|e| (e - m) * (e - m)).sum();
    let num: f64 = res.windows(2).map(|w| (w[1] - m) * (w[0] - m)).sum();
    let lag1 = if denom > 0.0 { num / denom } else { 0.0 };
    let extreme = |pick: fn(f64, f64) -> bool| {
        let mut best = 0;
        for i in 1..res.len() {
            if pick(res[i], res[best]) {
                best = i;
            }
        }
        let (r, e) = obs[best];
        ResidualExtreme {
            residual: e,
            target_year: r.target_year,
            target_month: r.target_month,
            horizon: r.horizon,
        }
    };
    Ok(ResidualSummary {
        n: res.len(),
        mean: m,
        sd: pop_sd(&res),
        lag1_autocorrelation: lag1,
        min: extreme(|a, b| a < b),
        max: extreme(|a, b| a > b),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub coefficient: f64,
    pub standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsReport {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, Coefficient>,
}

pub fn coefficients_report(model: &Regressor) -> Result<CoefficientsReport> {
    let lm = model.linear().ok_or_else(|| {
        Error::contract(format!("coefficients need an ols-stepwise model, got {}", model.family))
    })?;
    Ok(CoefficientsReport {
        intercept: lm.intercept,
        coefficients: lm
            .coefficients
            .iter()
            .map(|(k, &c)| {
                (
                    k.clone(),
                    Coefficient {
                        coefficient: c,
                        standardized: lm.standardized[k],
                    },
                )
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub instance: i32,
    pub feature: String,
    pub phi: f64,
    pub value: f64,
    /// 1 = largest mean |phi|.
    pub rank: usize,
}

/// Summary-plot data: one row per (instance, feature).
pub fn beeswarm(
    names: &[String],
    attributions: &[ShapleyAttribution],
    values: &[Vec<f64>],
) -> Result<Vec<BeeswarmRow>> {
    if attributions.len() != values.len() {
        return Err(Error::contract("one value row per attribution is required"));
    }
    let k = names.len();
    let mean_abs: Vec<f64> = (0..k)
        .map(|j| attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / attributions.len().max(1) as f64)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(names[a].cmp(&names[b])));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    let mut rows = Vec::with_capacity(k * attributions.len());
    for (a, v) in attributions.iter().zip(values) {
        for &j in &order {
            rows.push(BeeswarmRow {
                instance: a.instance,
                feature: names[j].clone(),
                phi: a.phi[j],
                value: v[j],
                rank: rank[j],
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainOptions {
    pub background_max: usize,
    pub permutations: usize,
    /// Exact enumeration is used up to this many features.
    pub exact_max: usize,
    pub importance_repeats: usize,
    pub pdp_bins: usize,
    pub surrogate_depth: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            background_max: 50,
            permutations: 200,
            exact_max: 10,
            importance_repeats: 10,
            pdp_bins: 10,
            surrogate_depth: 3,
        }
    }
}

/// Every explanation surface for one cell's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellExplanation {
    pub commodity: String,
    pub month: u8,
    pub horizon: u8,
    pub model: Family,
    pub dataset: String,
    pub features: Vec<String>,
    pub exact: bool,
    pub attributions: Vec<ShapleyAttribution>,
    pub influence: BTreeMap<String, f64>,
    pub intrinsic_importance: BTreeMap<String, f64>,
    pub permutation_importance: BTreeMap<String, f64>,
    pub pdp: Vec<PdpCurve>,
    pub surrogate: Surrogate,
    pub residuals: Option<ResidualSummary>,
    pub coefficients: Option<CoefficientsReport>,
}

/// Evenly spaced background rows, at most `max` of them.
pub fn background_rows(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}

/// Explain `model` (fitted on all rows of `frame`) over every row and the
/// forecast row; `records` are the model's rolling forecasts for the
/// residual summary.
pub fn explain_cell(
    model: &Regressor,
    frame: &FeatureFrame,
    records: &[ForecastRecord],
    opts: &ExplainOptions,
    seed: u64,
) -> Result<CellExplanation> {
    let x = frame.design();
    let names = x.names().to_vec();
    if names != model.features {
        return Err(Error::contract("model columns differ from the frame"));
    }
    let background = x.rows(&background_rows(x.n_rows(), opts.background_max.max(1)));
    let mut instances: Vec<(i32, Vec<f64>)> = (0..frame.n_rows())
        .map(|r| (frame.years[r], frame.row(r)))
        .collect();
    if let Some(fc) = &frame.forecast {
        instances.push((fc.year, fc.values.clone()));
    }
    let exact = names.len() <= opts.exact_max.min(EXACT_MAX_FEATURES);
    let f = |row: &[f64]| model.predict_row(row);
    let seed = derive_seed(seed, &[frame.month as u64, frame.horizon as u64]);
    let attributions = par::map(&instances, |(year, row)| {
        if exact {
            shapley_exact(&f, &background, row, *year)
        } else {
            shapley_sampling(&f, &background, row, *year, opts.permutations, seed)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let influence = names
        .iter()
        .cloned()
        .zip(median_relative_influence(&attributions)?)
        .collect();
    let mut pdps = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let values: Vec<f64> = instances.iter().map(|(_, r)| r[j]).collect();
        let phi: Vec<f64> = attributions.iter().map(|a| a.phi[j]).collect();
        match pdp(name, &values, &phi, opts.pdp_bins) {
            Ok(c) => pdps.push(c),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let residuals = if records.iter().filter(|r| r.observed.is_some()).count() >= 2 {
        Some(residual_analysis(records)?)
    } else {
        None
    };
    Ok(CellExplanation {
        commodity: frame.commodity.clone(),
        month: frame.month,
        horizon: frame.horizon,
        model: model.family,
        dataset: frame.dataset.clone(),
        features: names,
        exact,
        influence,
        intrinsic_importance: model.importance.clone(),
        permutation_importance: permutation_importance(model, &x, &frame.target, opts.importance_repeats, seed)?,
        pdp: pdps,
        surrogate: global_surrogate(model, &x, opts.surrogate_depth)?,
        residuals,
        coefficients: model.linear().map(|_| coefficients_report(model)).transpose()?,
        attributions,
    })
}

/// Rows of all attributions, for the summary-plot file.
pub fn cell_beeswarm(cell: &CellExplanation, frame: &FeatureFrame) -> Result<Vec<BeeswarmRow>> {
    let mut values: Vec<Vec<f64>> = (0..frame.n_rows()).map(|r| frame.row(r)).collect();
    if let Some(fc) = &frame.forecast {
        values.push(fc.values.clone());
    }
    beeswarm(&cell.features, &cell.attributions, &values)
}
