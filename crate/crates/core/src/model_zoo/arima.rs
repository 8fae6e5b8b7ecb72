//! ARIMA(p, d, q) with d in {0, 1}: conditional-sum-of-squares start,
//! exact Gaussian likelihood refinement through a Kalman filter, and
//! stationarity/invertibility enforced by a partial-autocorrelation
//! parameterization.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::optim::nelder_mead;
use super::{FittedModel, Family, ParamValue, Params, Regressor, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::stats::adf_test;
use crate::stats::linalg::{mean, pop_sd};

/// Minimum series length after differencing.
pub const ARIMA_MIN_OBS: usize = 150;

const NM_TOL: f64 = 1e-10;
const NM_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub ar: Vec<f64>,
    /// MA coefficients in the `1 + theta_1 B + ...` convention.
    pub ma: Vec<f64>,
    /// Mean of the (differenced) series; zero when d = 1.
    pub mean: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    /// False when the likelihood step failed and the CSS estimate is used.
    pub converged: bool,
    /// Training series, kept for forecasting.
    pub history: Vec<f64>,
}

/// Map unconstrained values to coefficients of a stationary AR polynomial
/// (partial autocorrelations via tanh, then Durbin-Levinson).
fn partrans(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = u.iter().map(|x| x.tanh()).collect();
    let mut work = phi.clone();
    for j in 1..phi.len() {
        let a = phi[j];
        for k in 0..j {
            work[k] -= a * phi[j - k - 1];
        }
        phi[..j].copy_from_slice(&work[..j]);
    }
    phi
}

fn difference(x: &[f64], d: usize) -> Vec<f64> {
    match d {
        0 => x.to_vec(),
        _ => x.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

/// Conditional residuals: zero for the first `p` values.
fn css_residuals(w: &[f64], ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut v = w[t];
        for (i, a) in ar.iter().enumerate() {
            v -= a * w[t - 1 - i];
        }
        for (j, b) in ma.iter().enumerate() {
            if t > j {
                v -= b * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

/// Stationary covariance of the state: solves `P = T P T' + R R'`.
fn initial_covariance(phi: &[f64], r_vec: &[f64]) -> Option<DMatrix<f64>> {
    let r = phi.len();
    let t = |i: usize, j: usize| -> f64 {
        if j == 0 {
            phi[i]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    };
    let m = r * r;
    let mut a = DMatrix::<f64>::identity(m, m);
    for i in 0..r {
        for k in 0..r {
            for j in 0..r {
                for l in 0..r {
                    a[(i * r + k, j * r + l)] -= t(i, j) * t(k, l);
                }
            }
        }
    }
    let b = DVector::from_fn(m, |idx, _| r_vec[idx / r] * r_vec[idx % r]);
    let sol = a.lu().solve(&b)?;
    Some(DMatrix::from_fn(r, r, |i, k| sol[i * r + k]))
}

/// Concentrated Gaussian likelihood pieces: (sum v^2/F, sum ln F).
fn kalman(w: &[f64], ar: &[f64], ma: &[f64]) -> Option<(f64, f64)> {
    let r = ar.len().max(ma.len() + 1);
    let mut phi = vec![0.0; r];
    phi[..ar.len()].copy_from_slice(ar);
    let mut rv = vec![0.0; r];
    rv[0] = 1.0;
    rv[1..=ma.len()].copy_from_slice(ma);

    let p0 = initial_covariance(&phi, &rv)?;
    let mut p: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| p0[(i, j)]).collect()).collect();
    let mut a = vec![0.0; r];
    let mut tmp = vec![vec![0.0; r]; r];
    let (mut ssum, mut lsum) = (0.0, 0.0);
    for &obs in w {
        let f = p[0][0];
        if !(f > 0.0) || !f.is_finite() {
            return None;
        }
        let v = obs - a[0];
        ssum += v * v / f;
        lsum += f.ln();
        // measurement update
        let k: Vec<f64> = (0..r).map(|i| p[i][0] / f).collect();
        for i in 0..r {
            a[i] += k[i] * v;
        }
        let row0 = p[0].clone();
        for i in 0..r {
            for j in 0..r {
                p[i][j] -= k[i] * row0[j];
            }
        }
        // time update with the companion transition
        let a0 = a[0];
        for i in 0..r {
            a[i] = phi[i] * a0 + if i + 1 < r { a[i + 1] } else { 0.0 };
        }
        for i in 0..r {
            for j in 0..r {
                tmp[i][j] = phi[i] * p[0][j] + if i + 1 < r { p[i + 1][j] } else { 0.0 };
            }
        }
        for i in 0..r {
            for k2 in 0..r {
                p[i][k2] = tmp[i][0] * phi[k2]
                    + if k2 + 1 < r { tmp[i][k2 + 1] } else { 0.0 }
                    + rv[i] * rv[k2];
            }
        }
    }
    Some((ssum, lsum))
}

struct Problem<'a> {
    w: &'a [f64],
    p: usize,
    q: usize,
    with_mean: bool,
}

impl Problem<'_> {
    fn unpack(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let ar = partrans(&theta[..self.p]);
        let ma: Vec<f64> = partrans(&theta[self.p..self.p + self.q])
            .into_iter()
            .map(|c| -c)
            .collect();
        let mu = if self.with_mean { theta[self.p + self.q] } else { 0.0 };
        (ar, ma, mu)
    }

    fn centered(&self, mu: f64) -> Vec<f64> {
        self.w.iter().map(|v| v - mu).collect()
    }

    fn css(&self, theta: &[f64]) -> f64 {
        let (ar, ma, mu) = self.unpack(theta);
        let e = css_residuals(&self.centered(mu), &ar, &ma);
        let ss: f64 = e[self.p..].iter().map(|v| v * v).sum();
        0.5 * (ss / (self.w.len() - self.p) as f64).ln()
    }

    fn neg_loglik(&self, theta: &[f64]) -> f64 {
        let (ar, ma, mu) = self.unpack(theta);
        match kalman(&self.centered(mu), &ar, &ma) {
            Some((ssum, lsum)) => {
                let n = self.w.len() as f64;
                0.5 * ((ssum / n).ln() + lsum / n)
            }
            None => f64::INFINITY,
        }
    }
}

fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> (Vec<f64>, bool) {
    let first = nelder_mead(&f, x0, 0.1, NM_TOL, NM_MAX_ITER);
    // one restart guards against a collapsed simplex
    let second = nelder_mead(&f, &first.x, 0.05, NM_TOL, NM_MAX_ITER);
    let converged = first.converged && second.converged;
    if second.value <= first.value {
        (second.x, converged)
    } else {
        (first.x, converged)
    }
}

impl ArimaModel {
    /// Fit with the given order; likelihood non-convergence is an error
    /// carrying the CSS estimate `(ar.., ma.., mean)`.
    pub fn fit(series: &[f64], order: ArimaOrder) -> Result<Self> {
        let m = Self::fit_lenient(series, order)?;
        if m.converged {
            Ok(m)
        } else {
            let mut css = m.ar.clone();
            css.extend(&m.ma);
            css.push(m.mean);
            Err(Error::NonConvergence { css })
        }
    }

    /// Like [`ArimaModel::fit`], but falls back to the CSS estimate
    /// (flagged `converged = false`) when refinement fails.
    pub fn fit_lenient(series: &[f64], order: ArimaOrder) -> Result<Self> {
        if order.d > 1 {
            return Err(Error::contract(format!("d = {} not supported", order.d)));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("series contains non-finite values".into()));
        }
        let w = difference(series, order.d);
        if w.len() < ARIMA_MIN_OBS {
            return Err(Error::contract(format!(
                "ARIMA needs {ARIMA_MIN_OBS} observations after differencing, got {}",
                w.len()
            )));
        }
        let (p, q) = (order.p, order.q);
        let with_mean = order.d == 0;
        let n = w.len() as f64;
        let k_params = p + q + usize::from(with_mean) + 1;

        if p == 0 && q == 0 {
            let mu = if with_mean { mean(&w) } else { 0.0 };
            let sigma2 = w.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            if !(sigma2 > 0.0) {
                return Err(Error::Degenerate("series has zero variance".into()));
            }
            let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
            return Ok(Self {
                order,
                ar: Vec::new(),
                ma: Vec::new(),
                mean: mu,
                sigma2,
                loglik,
                aic: -2.0 * loglik + 2.0 * k_params as f64,
                converged: true,
                history: series.to_vec(),
            });
        }

        // work on a standardized copy so that step sizes are scale free
        let scale = pop_sd(&w);
        if !(scale > 0.0) {
            return Err(Error::Degenerate("series has zero variance".into()));
        }
        let center = if with_mean { mean(&w) } else { 0.0 };
        let z: Vec<f64> = w.iter().map(|v| (v - center) / scale).collect();
        let prob = Problem {
            w: &z,
            p,
            q,
            with_mean,
        };
        let x0 = vec![0.0; p + q + usize::from(with_mean)];
        let (css_x, _) = minimize(|t| prob.css(t), &x0);
        let (ml_x, converged) = minimize(|t| prob.neg_loglik(t), &css_x);
        let ml_ok = converged && prob.neg_loglik(&ml_x).is_finite();
        let theta = if ml_ok { ml_x } else { css_x };

        let (ar, ma, mu_z) = prob.unpack(&theta);
        let zc = prob.centered(mu_z);
        let (sigma2_z, lsum) = match kalman(&zc, &ar, &ma) {
            Some((ssum, lsum)) => (ssum / n, lsum),
            None => {
                let e = css_residuals(&zc, &ar, &ma);
                (e[p..].iter().map(|v| v * v).sum::<f64>() / (n - p as f64), 0.0)
            }
        };
        let sigma2 = sigma2_z * scale * scale;
        let loglik = -0.5 * (n * (2.0 * std::f64::consts::PI * sigma2).ln() + lsum + n);
        Ok(Self {
            order,
            ar,
            ma,
            mean: center + mu_z * scale,
            sigma2,
            loglik,
            aic: -2.0 * loglik + 2.0 * k_params as f64,
            converged: ml_ok,
            history: series.to_vec(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Forecast `steps` values past the training series by the residual
    /// recursion; future innovations are zero.
    pub fn forecast(&self, steps: usize) -> Vec<f64> {
        let d = self.order.d;
        let w = difference(&self.history, d);
        let mut wc: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        let mut e = css_residuals(&wc, &self.ar, &self.ma);
        let mut out = Vec::with_capacity(steps);
        let mut level = *self.history.last().expect("non-empty history");
        for _ in 0..steps {
            let t = wc.len();
            let mut v = 0.0;
            for (i, a) in self.ar.iter().enumerate() {
                v += a * wc[t - 1 - i];
            }
            for (j, b) in self.ma.iter().enumerate() {
                if t > j {
                    v += b * e[t - 1 - j];
                }
            }
            wc.push(v);
            e.push(0.0);
            let next = v + self.mean;
            let value = if d == 0 { next } else { level + next };
            level = value;
            out.push(value);
        }
        out
    }
}

fn order_params(order: ArimaOrder) -> Params {
    let mut p = Params::new();
    p.insert("p".into(), ParamValue::Num(order.p as f64));
    p.insert("d".into(), ParamValue::Num(order.d as f64));
    p.insert("q".into(), ParamValue::Num(order.q as f64));
    p
}

pub(crate) fn wrap(model: ArimaModel) -> Regressor {
    Regressor {
        version: MODEL_FORMAT_VERSION,
        family: Family::Arima,
        params: order_params(model.order),
        features: Vec::new(),
        importance: BTreeMap::new(),
        model: FittedModel::Arima(model),
    }
}

/// Fit an ARIMA model and wrap it as a [`Regressor`] without features.
pub fn arima_fit(series: &[f64], order: ArimaOrder) -> Result<Regressor> {
    ArimaModel::fit(series, order).map(wrap)
}

/// Pick d by an ADF test on the raw series (d = 0 when the unit root is
/// rejected at `alpha`), then the (p, q) minimizing AIC. Ties keep the
/// first order in (p, q) scan order.
pub fn arima_order_search(series: &[f64], max_p: usize, max_q: usize, alpha: f64) -> Result<ArimaOrder> {
    if series.len() < ARIMA_MIN_OBS {
        return Err(Error::contract(format!(
            "order search needs {ARIMA_MIN_OBS} observations, got {}",
            series.len()
        )));
    }
    let d = if adf_test(series, alpha)?.reject_unit_root { 0 } else { 1 };
    let mut best: Option<(f64, ArimaOrder)> = None;
    let mut last_err = None;
    for p in 0..=max_p {
        for q in 0..=max_q {
            let order = ArimaOrder::new(p, d, q);
            match ArimaModel::fit(series, order) {
                Ok(m) if m.aic.is_finite() => {
                    if best.is_none_or(|(a, _)| m.aic < a) {
                        best = Some((m.aic, order));
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    log::debug!("ARIMA{order} skipped: {e}");
                    last_err = Some(e);
                }
            }
        }
    }
    best.map(|(_, o)| o).ok_or_else(|| {
        Error::Fit(format!(
            "no ARIMA order could be fitted{}",
            last_err.map(|e| format!(": {e}")).unwrap_or_default()
        ))
    })
}
