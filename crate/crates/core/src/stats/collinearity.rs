use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::linalg::{mean, pearson};
use crate::error::{Error, Result};
use crate::model_zoo::Design;

/// Relative pivot magnitude under which a column counts as dependent.
pub const ALIAS_TOL: f64 = 1e-8;

/// Columns (by index) that are exact linear combinations of other columns
/// plus an intercept, found by column-pivoted QR on the centered design.
pub fn alias_columns(x: &Design) -> Vec<usize> {
    let (n, k) = (x.n_rows(), x.n_cols());
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let centered: Vec<Vec<f64>> = x
        .columns()
        .iter()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let a = DMatrix::from_fn(n, k, |i, j| centered[j][i]);
    let qr = a.col_piv_qr();
    let r = qr.r();
    let mut order = DMatrix::from_fn(1, k, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let diag: Vec<f64> = (0..n.min(k)).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let rank = if largest == 0.0 {
        0
    } else {
        diag.iter().take_while(|&&d| d > ALIAS_TOL * largest).count()
    };
    let mut out: Vec<usize> = (rank..k).map(|p| order[(0, p)] as usize).collect();
    out.sort_unstable();
    out
}

/// Names of exactly collinear columns of `x`.
pub fn alias_detect(x: &Design) -> BTreeSet<String> {
    alias_columns(x)
        .into_iter()
        .map(|j| x.names()[j].clone())
        .collect()
}

/// Iteratively drop columns until no absolute pairwise Pearson
/// correlation exceeds `cutoff`. From the worst pair, the column with the
/// larger mean absolute correlation to the other remaining columns goes;
/// on a tie the lexicographically larger name goes.
pub fn correlation_columns(x: &Design, cutoff: f64) -> Result<Vec<usize>> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::contract(format!("cutoff {cutoff} outside (0, 1)")));
    }
    let k = x.n_cols();
    let mut corr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let c = pearson(x.column(i), x.column(j)).abs();
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    let names = x.names();
    let mut alive: Vec<bool> = vec![true; k];
    let mut removed = Vec::new();
    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..k {
            for j in i + 1..k {
                if !(alive[i] && alive[j]) || corr[i][j] <= cutoff {
                    continue;
                }
                let better = match worst {
                    None => true,
                    Some((wi, wj, c)) => {
                        corr[i][j] > c
                            || (corr[i][j] == c
                                && (&names[i], &names[j]) < (&names[wi], &names[wj]))
                    }
                };
                if better {
                    worst = Some((i, j, corr[i][j]));
                }
            }
        }
        let Some((a, b, _)) = worst else { break };
        let mean_abs = |c: usize| {
            let others: Vec<f64> = (0..k)
                .filter(|&o| o != c && alive[o])
                .map(|o| corr[c][o])
                .collect();
            others.iter().sum::<f64>() / others.len().max(1) as f64
        };
        let (ma, mb) = (mean_abs(a), mean_abs(b));
        let drop = if ma > mb || (ma == mb && names[a] > names[b]) { a } else { b };
        alive[drop] = false;
        removed.push(drop);
    }
    removed.sort_unstable();
    Ok(removed)
}

pub fn correlation_filter(x: &Design, cutoff: f64) -> Result<BTreeSet<String>> {
    Ok(correlation_columns(x, cutoff)?
        .into_iter()
        .map(|j| x.names()[j].clone())
        .collect())
}
