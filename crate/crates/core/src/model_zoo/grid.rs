use serde::{Deserialize, Serialize};

use super::{cmp_params, fit, num, Design, Family, FittedModel, ModelSpec, ParamValue, Params};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Contiguous k-fold splits of `0..n` as (train, test) index lists. The
/// first `n % k` folds get one extra row.
pub fn kfold_splits(n: usize, k: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || n < k {
        return Err(Error::contract(format!("cannot split {n} rows into {k} folds")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let test: Vec<usize> = (start..start + len).collect();
        let train: Vec<usize> = (0..start).chain(start + len..n).collect();
        out.push((train, test));
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: Params,
    /// Mean fold RMSE; infinite when a fold could not be fitted.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Params,
    pub scores: Vec<GridScore>,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Grid point minimizing the mean inner-fold RMSE; ties go to the
/// lexicographically smallest parameter tuple. A single-point grid is
/// returned without cross-validation.
pub fn grid_search(spec: &ModelSpec, x: &Design, y: &[f64], folds: usize) -> Result<GridResult> {
    spec.validate()?;
    if spec.family == Family::Arima {
        return Err(Error::contract("ARIMA orders are chosen by arima_order_search"));
    }
    let mut points = spec.points();
    points.sort_by(cmp_params);
    points.dedup();
    if points.len() == 1 {
        let best = points.pop().expect("one point");
        return Ok(GridResult {
            scores: vec![GridScore {
                params: best.clone(),
                rmse: f64::NAN,
            }],
            best,
        });
    }
    let splits = kfold_splits(y.len(), folds)?;
    let mut totals = vec![0.0; points.len()];

    // Boosting without subsampling is nested in `rounds`: one fit with the
    // largest count scores every smaller count through staged predictions.
    let mut groups: Vec<(Params, Vec<(usize, usize)>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (key, rounds) = if spec.family == Family::Gbm {
            let mut key = p.clone();
            let r = num(p, "rounds", 100.0)?;
            key.remove("rounds");
            (key, r as usize)
        } else {
            (p.clone(), 0)
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push((i, rounds)),
            None => groups.push((key, vec![(i, rounds)])),
        }
    }

    for (fi, (train, test)) in splits.iter().enumerate() {
        let xt = x.rows(train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xv = x.rows(test);
        let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let seed = derive_seed(spec.seed, &[fi as u64]);
        for (key, members) in &groups {
            let mut params = key.clone();
            if spec.family == Family::Gbm {
                let max_r = members.iter().map(|m| m.1).max().unwrap_or(0);
                params.insert("rounds".into(), ParamValue::Num(max_r as f64));
            } else {
                params = points[members[0].0].clone();
            }
            match fit(spec.family, &params, seed, &xt, &yt) {
                Ok(model) => {
                    for &(i, rounds) in members {
                        let pred: Vec<f64> = (0..xv.n_rows())
                            .map(|r| {
                                let row = xv.row(r);
                                match &model.model {
                                    FittedModel::Gbm(g) => g.predict_staged(&row, rounds),
                                    _ => model.predict_row(&row),
                                }
                            })
                            .collect();
                        totals[i] += rmse(&yv, &pred);
                    }
                }
                Err(e) => {
                    log::debug!("grid point {params:?} failed on fold {fi}: {e}");
                    for &(i, _) in members {
                        totals[i] = f64::INFINITY;
                    }
                }
            }
        }
    }
    let scores: Vec<GridScore> = points
        .iter()
        .zip(&totals)
        .map(|(p, t)| GridScore {
            params: p.clone(),
            rmse: t / splits.len() as f64,
        })
        .collect();
    // points are sorted, so the first strict minimum wins ties
    let mut best: Option<&GridScore> = None;
    for s in &scores {
        if s.rmse.is_finite() && best.is_none_or(|b| s.rmse < b.rmse) {
            best = Some(s);
        }
    }
    let best = best
        .ok_or_else(|| Error::Fit(format!("no {} grid point could be fitted", spec.family)))?
        .params
        .clone();
    Ok(GridResult { best, scores })
}
