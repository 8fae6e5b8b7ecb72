use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Design;
use crate::error::{Error, Result};
use crate::stats::linalg::{lstsq, mean, pop_sd, with_intercept};
use crate::stats::{alias_columns, correlation_columns};

/// Minimal AIC improvement for a stepwise move to be taken.
pub const STEP_TOL: f64 = 1e-8;

/// Plain least-squares fit with an intercept on every column.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub rss: f64,
    pub aic: f64,
    pub r2: f64,
}

fn rss_floor(y: &[f64]) -> f64 {
    let m = mean(y);
    let tss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    (tss * 1e-20).max(f64::MIN_POSITIVE)
}

/// `n ln(RSS/n) + 2k`, with RSS floored so that exact fits stay finite.
pub fn aic(rss: f64, n: usize, k: usize, floor: f64) -> f64 {
    let n = n as f64;
    n * (rss.max(floor) / n).ln() + 2.0 * k as f64
}

fn fit_subset(x: &Design, y: &[f64], cols: &[usize]) -> Result<(f64, Vec<f64>, f64)> {
    let refs: Vec<&[f64]> = cols.iter().map(|&j| x.column(j)).collect();
    let a = with_intercept(&refs, y.len());
    let ls = lstsq(&a, y)?;
    Ok((ls.coef[0], ls.coef[1..].to_vec(), ls.rss))
}

pub fn fit_ols(x: &Design, y: &[f64]) -> Result<OlsFit> {
    if x.n_rows() != y.len() {
        return Err(Error::contract("target length differs from design rows"));
    }
    let cols: Vec<usize> = (0..x.n_cols()).collect();
    let (intercept, coef, rss) = fit_subset(x, y, &cols)?;
    let m = mean(y);
    let tss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(OlsFit {
        intercept,
        coef,
        rss,
        aic: aic(rss, y.len(), cols.len() + 1, rss_floor(y)),
        r2: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Start,
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub feature: Option<String>,
    pub aic: f64,
}

/// Outcome of bidirectional stepwise selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Stepwise {
    /// Selected column indices, ascending.
    pub selected: Vec<usize>,
    pub intercept: f64,
    /// Coefficients aligned with `selected`.
    pub coef: Vec<f64>,
    pub rss: f64,
    pub aic: f64,
    pub trace: Vec<StepRecord>,
}

/// Bidirectional stepwise selection from the intercept-only model. Each
/// step takes the single add or drop with the lowest AIC, provided it
/// improves on the current AIC by more than [`STEP_TOL`]. Models keep at
/// least two residual degrees of freedom.
pub fn stepwise_aic(x: &Design, y: &[f64]) -> Result<Stepwise> {
    let n = y.len();
    if x.n_rows() != n {
        return Err(Error::contract("target length differs from design rows"));
    }
    if n < 2 {
        return Err(Error::contract(format!("need at least 2 rows, got {n}")));
    }
    let floor = rss_floor(y);
    let mut current: Vec<usize> = Vec::new();
    let (mut b0, mut coef, mut rss) = fit_subset(x, y, &current)?;
    let mut cur_aic = aic(rss, n, 1, floor);
    let mut trace = vec![StepRecord {
        action: StepAction::Start,
        feature: None,
        aic: cur_aic,
    }];
    loop {
        let mut best: Option<(f64, StepAction, usize, Vec<usize>, (f64, Vec<f64>, f64))> = None;
        let mut consider = |action: StepAction, j: usize, cols: Vec<usize>| {
            let Ok(fit) = fit_subset(x, y, &cols) else { return };
            let a = aic(fit.2, n, cols.len() + 1, floor);
            if a.is_finite() && best.as_ref().is_none_or(|b| a < b.0) {
                best = Some((a, action, j, cols, fit));
            }
        };
        for (pos, &j) in current.iter().enumerate() {
            let mut cols = current.clone();
            cols.remove(pos);
            consider(StepAction::Remove, j, cols);
        }
        if current.len() + 3 <= n {
            for j in 0..x.n_cols() {
                if current.contains(&j) {
                    continue;
                }
                let mut cols = current.clone();
                cols.push(j);
                cols.sort_unstable();
                consider(StepAction::Add, j, cols);
            }
        }
        match best {
            Some((a, action, j, cols, fit)) if a < cur_aic - STEP_TOL => {
                current = cols;
                (b0, coef, rss) = fit;
                cur_aic = a;
                trace.push(StepRecord {
                    action,
                    feature: Some(x.names()[j].clone()),
                    aic: a,
                });
            }
            _ => break,
        }
    }
    Ok(Stepwise {
        selected: current,
        intercept: b0,
        coef,
        rss,
        aic: cur_aic,
        trace,
    })
}

/// Linear model chosen by alias removal, an optional correlation filter,
/// and stepwise AIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: Vec<String>,
    pub intercept: f64,
    /// Coefficient per training column; zero where not selected.
    pub weights: Vec<f64>,
    /// Coefficients of the selected columns.
    pub coefficients: BTreeMap<String, f64>,
    /// Coefficients scaled by sd(x)/sd(y).
    pub standardized: BTreeMap<String, f64>,
    pub aliased: Vec<String>,
    pub filtered: Vec<String>,
    pub cor_cutoff: f64,
    pub aic: f64,
    pub trace: Vec<StepRecord>,
}

impl LinearModel {
    /// `cor_cutoff >= 1` disables the correlation filter.
    pub fn fit(x: &Design, y: &[f64], cor_cutoff: f64) -> Result<Self> {
        let k = x.n_cols();
        let aliased = alias_columns(x);
        let keep: Vec<usize> = (0..k).filter(|j| !aliased.contains(j)).collect();
        let mut design = x.select(&keep);
        let mut kept = keep;
        let mut filtered = Vec::new();
        if cor_cutoff < 1.0 && design.n_cols() > 1 {
            let drop = correlation_columns(&design, cor_cutoff)?;
            filtered = drop.iter().map(|&j| kept[j]).collect();
            let idx: Vec<usize> = (0..design.n_cols()).filter(|j| !drop.contains(j)).collect();
            kept = idx.iter().map(|&j| kept[j]).collect();
            design = design.select(&idx);
        }
        let step = stepwise_aic(&design, y)?;
        let sd_y = pop_sd(y);
        let mut weights = vec![0.0; k];
        let mut coefficients = BTreeMap::new();
        let mut standardized = BTreeMap::new();
        for (&local, &b) in step.selected.iter().zip(&step.coef) {
            let j = kept[local];
            weights[j] = b;
            let name = x.names()[j].clone();
            let s = if sd_y > 0.0 { b * pop_sd(x.column(j)) / sd_y } else { 0.0 };
            coefficients.insert(name.clone(), b);
            standardized.insert(name, s);
        }
        let names = |v: &[usize]| v.iter().map(|&j| x.names()[j].clone()).collect();
        Ok(Self {
            features: x.names().to_vec(),
            intercept: step.intercept,
            weights,
            coefficients,
            standardized,
            aliased: names(&aliased),
            filtered: names(&filtered),
            cor_cutoff,
            aic: step.aic,
            trace: step.trace,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>()
    }

    /// |standardized coefficient| per training column.
    pub fn importance(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for (j, name) in self.features.iter().enumerate().take(k) {
            if let Some(s) = self.standardized.get(name) {
                out[j] = if s.is_finite() { s.abs() } else { 0.0 };
            }
        }
        out
    }
}
