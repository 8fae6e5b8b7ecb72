//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value floor below which a design counts as singular.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub rss: f64,
    /// Diagonal of (X'X)^-1, for standard errors.
    pub xtx_inv_diag: Vec<f64>,
}

/// Least squares `min |X b - y|` via SVD. Errors on rank deficiency.
pub fn lstsq(x: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquares> {
    let (n, k) = x.shape();
    if n != y.len() {
        return Err(Error::contract("design rows differ from target length"));
    }
    if k == 0 {
        let rss = y.iter().map(|v| v * v).sum();
        return Ok(LeastSquares {
            coef: Vec::new(),
            rss,
            xtx_inv_diag: Vec::new(),
        });
    }
    if n < k {
        return Err(Error::Fit(format!("{n} rows cannot identify {k} coefficients")));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(Error::Fit("singular design matrix".into()));
    }
    let yv = DVector::from_column_slice(y);
    let coef = svd
        .solve(&yv, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let resid = x * &coef - &yv;
    let v_t = svd.v_t.as_ref().expect("computed");
    let xtx_inv_diag = (0..k)
        .map(|j| {
            (0..k)
                .map(|i| (v_t[(i, j)] / svd.singular_values[i]).powi(2))
                .sum()
        })
        .collect();
    Ok(LeastSquares {
        coef: coef.iter().copied().collect(),
        rss: resid.norm_squared(),
        xtx_inv_diag,
    })
}

/// Design with a leading intercept column.
pub fn with_intercept(columns: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}

/// Mean, accumulated as offsets from the first value so that a constant
/// vector returns that constant exactly.
pub fn mean(v: &[f64]) -> f64 {
    let Some(&first) = v.first() else {
        return f64::NAN;
    };
    first + v.iter().map(|x| x - first).sum::<f64>() / v.len() as f64
}

/// Population standard deviation (divisor n).
pub fn pop_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Sample standard deviation (divisor n - 1).
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}
