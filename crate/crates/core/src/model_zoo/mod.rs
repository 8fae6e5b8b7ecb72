//! From-scratch regressors behind one contract: CART, random forest,
//! gradient-boosted trees, OLS with stepwise AIC selection, and ARIMA.

pub mod arima;
mod forest;
mod gbm;
mod grid;
pub mod ols;
mod optim;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arima::{arima_fit, arima_order_search, ArimaModel, ArimaOrder, ARIMA_MIN_OBS};
pub use forest::Forest;
pub use gbm::Boosted;
pub use grid::{grid_search, kfold_splits, GridResult};
pub use ols::{fit_ols, stepwise_aic, LinearModel, OlsFit, Stepwise, StepRecord};
pub use optim::{nelder_mead, NelderMeadResult};
pub use tree::{Node, Tree, TreeParams};

/// Version tag of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Column-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Design {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(
            columns.iter().all(|c| c.len() == n_rows),
            "ragged design columns"
        );
        Self {
            names,
            columns,
            n_rows,
        }
    }

    /// Build from rows; `rows[i][j]` is feature `j` of sample `i`.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let k = names.len();
        let columns = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let mut d = Self::new(names, columns);
        d.n_rows = rows.len();
        d
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Design {
        let mut d = Design::new(
            self.names.clone(),
            self.columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
        );
        d.n_rows = idx.len();
        d
    }

    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Design {
        assert_eq!(values.len(), self.n_rows);
        let mut d = self.clone();
        d.columns[j] = values;
        d
    }

    pub fn select(&self, cols: &[usize]) -> Design {
        let mut d = Design::new(
            cols.iter().map(|&j| self.names[j].clone()).collect(),
            cols.iter().map(|&j| self.columns[j].clone()).collect(),
        );
        d.n_rows = self.n_rows;
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "cart")]
    Cart,
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "gbm")]
    Gbm,
    #[serde(rename = "ols-stepwise")]
    OlsStepwise,
    #[serde(rename = "arima")]
    Arima,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Cart => "cart",
            Family::RandomForest => "rf",
            Family::Gbm => "gbm",
            Family::OlsStepwise => "ols-stepwise",
            Family::Arima => "arima",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cart" => Some(Family::Cart),
            "rf" => Some(Family::RandomForest),
            "gbm" => Some(Family::Gbm),
            "ols-stepwise" => Some(Family::OlsStepwise),
            "arima" => Some(Family::Arima),
            _ => None,
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, Family::Cart | Family::RandomForest | Family::Gbm)
    }

    /// Hyperparameter names accepted by the family.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Cart => &["depth", "min_leaf", "cp"],
            Family::RandomForest => &["ntree", "mtry", "depth", "min_leaf", "cp", "bootstrap"],
            Family::Gbm => &["depth", "shrinkage", "rounds", "min_leaf"],
            Family::OlsStepwise => &["cor_cutoff"],
            Family::Arima => &["p", "d", "q"],
        }
    }

    /// Default grid for the family.
    pub fn default_grid(self) -> Grid {
        let nums = |v: &[f64]| v.iter().map(|&x| ParamValue::Num(x)).collect::<Vec<_>>();
        let mut g = Grid::new();
        match self {
            Family::Cart => {
                g.insert("depth".into(), nums(&[2.0, 3.0, 5.0]));
                g.insert("min_leaf".into(), nums(&[2.0, 5.0]));
            }
            Family::RandomForest => {
                g.insert("ntree".into(), nums(&[500.0]));
                g.insert(
                    "mtry".into(),
                    ["sqrt", "third", "half"]
                        .iter()
                        .map(|s| ParamValue::Text((*s).into()))
                        .collect(),
                );
            }
            Family::Gbm => {
                g.insert("depth".into(), nums(&[1.0, 2.0, 3.0]));
                g.insert("shrinkage".into(), nums(&[0.01, 0.1]));
                g.insert("rounds".into(), nums(&[100.0, 500.0]));
            }
            Family::OlsStepwise => {
                g.insert("cor_cutoff".into(), nums(&[0.6, 0.9]));
            }
            Family::Arima => {
                g.insert("p".into(), nums(&[1.0]));
                g.insert("d".into(), nums(&[0.0]));
                g.insert("q".into(), nums(&[0.0]));
            }
        }
        g
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A hyperparameter value: a number, or a symbolic rule such as
/// `"sqrt"` for `mtry`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

impl ParamValue {
    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (ParamValue::Num(a), ParamValue::Num(b)) => a.total_cmp(b),
            (ParamValue::Num(_), ParamValue::Text(_)) => Ordering::Less,
            (ParamValue::Text(_), ParamValue::Num(_)) => Ordering::Greater,
            (ParamValue::Text(a), ParamValue::Text(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;
pub type Grid = BTreeMap<String, Vec<ParamValue>>;

/// Lexicographic order over parameter tuples (names sorted, values numeric
/// where numeric).
pub fn cmp_params(a: &Params, b: &Params) -> std::cmp::Ordering {
    for ((ka, va), (kb, vb)) in a.iter().zip(b.iter()) {
        let o = ka.cmp(kb).then_with(|| va.cmp_key(vb));
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

pub fn params_label(p: &Params) -> String {
    p.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub grid: Grid,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, grid: Grid, seed: u64) -> Result<Self> {
        let spec = Self { family, grid, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_default_grid(family: Family, seed: u64) -> Self {
        Self {
            family,
            grid: family.default_grid(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.values().any(Vec::is_empty) {
            return Err(Error::contract(format!("{} grid is empty", self.family)));
        }
        for name in self.grid.keys() {
            if !self.family.param_names().contains(&name.as_str()) {
                return Err(Error::contract(format!(
                    "`{name}` is not a {} hyperparameter",
                    self.family
                )));
            }
        }
        Ok(())
    }

    /// Cartesian product of the grid, in name order.
    pub fn points(&self) -> Vec<Params> {
        let mut out = vec![Params::new()];
        for (name, values) in &self.grid {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        out
    }
}

fn num(params: &Params, name: &str, default: f64) -> Result<f64> {
    match params.get(name) {
        None => Ok(default),
        Some(ParamValue::Num(x)) => Ok(*x),
        Some(ParamValue::Text(s)) => Err(Error::contract(format!("`{name}` must be numeric, got {s}"))),
    }
}

fn count(params: &Params, name: &str, default: usize) -> Result<usize> {
    let x = num(params, name, default as f64)?;
    if x < 0.0 || x.fract() != 0.0 {
        return Err(Error::contract(format!("`{name}` must be a non-negative integer, got {x}")));
    }
    Ok(x as usize)
}

/// Resolve `mtry` for `k` features: a count, or `sqrt` / `third` / `half`
/// meaning ceil(sqrt k), ceil(k/3), ceil(k/2).
fn resolve_mtry(params: &Params, k: usize) -> Result<usize> {
    let m = match params.get("mtry") {
        None => (k as f64 / 3.0).ceil() as usize,
        Some(ParamValue::Num(x)) => *x as usize,
        Some(ParamValue::Text(s)) => match s.as_str() {
            "sqrt" => (k as f64).sqrt().ceil() as usize,
            "third" => (k as f64 / 3.0).ceil() as usize,
            "half" => (k as f64 / 2.0).ceil() as usize,
            "all" => k,
            other => return Err(Error::contract(format!("unknown mtry rule {other}"))),
        },
    };
    Ok(m.clamp(1, k.max(1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Cart(Tree),
    Forest(Forest),
    Gbm(Boosted),
    Ols(LinearModel),
    Arima(ArimaModel),
}

/// A fitted model with its training columns and intrinsic importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub version: u32,
    pub family: Family,
    pub params: Params,
    pub features: Vec<String>,
    /// Non-negative per-feature importance. Empty for ARIMA.
    pub importance: BTreeMap<String, f64>,
    pub model: FittedModel,
}

impl Regressor {
    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        if x.names() != self.features.as_slice() {
            return Err(Error::contract(format!(
                "design columns {:?} differ from training columns {:?}",
                x.names(),
                self.features
            )));
        }
        if matches!(self.model, FittedModel::Arima(_)) {
            return Err(Error::contract(
                "ARIMA models forecast from a series; use the recursive forecaster",
            ));
        }
        Ok((0..x.n_rows()).map(|i| self.predict_row(&x.row(i))).collect())
    }

    /// Prediction for one row laid out in training-column order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Cart(t) => t.predict_row(row),
            FittedModel::Forest(f) => f.predict_row(row),
            FittedModel::Gbm(g) => g.predict_row(row),
            FittedModel::Ols(m) => m.predict_row(row),
            FittedModel::Arima(a) => a.mean(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Regressor = serde_json::from_str(s)?;
        if r.version != MODEL_FORMAT_VERSION {
            return Err(Error::contract(format!("unsupported model version {}", r.version)));
        }
        Ok(r)
    }

    pub fn tree(&self) -> Option<&Tree> {
        match &self.model {
            FittedModel::Cart(t) => Some(t),
            _ => None,
        }
    }

    pub fn arima(&self) -> Option<&ArimaModel> {
        match &self.model {
            FittedModel::Arima(a) => Some(a),
            _ => None,
        }
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.model {
            FittedModel::Ols(m) => Some(m),
            _ => None,
        }
    }
}

pub(crate) fn tree_params(params: &Params, default_depth: usize, default_min_leaf: usize, default_cp: f64) -> Result<TreeParams> {
    Ok(TreeParams {
        max_depth: count(params, "depth", default_depth)?,
        min_leaf: count(params, "min_leaf", default_min_leaf)?.max(1),
        cp: num(params, "cp", default_cp)?,
        mtry: None,
    })
}

/// Fit one grid point. ARIMA is fitted through [`arima_fit`] instead.
pub fn fit(family: Family, params: &Params, seed: u64, x: &Design, y: &[f64]) -> Result<Regressor> {
    if x.n_rows() != y.len() {
        return Err(Error::contract("target length differs from design rows"));
    }
    if y.len() < 2 {
        return Err(Error::contract(format!("need at least 2 rows, got {}", y.len())));
    }
    if x.n_cols() == 0 {
        return Err(Error::contract("design has no columns"));
    }
    for name in params.keys() {
        if !family.param_names().contains(&name.as_str()) {
            return Err(Error::contract(format!("`{name}` is not a {family} hyperparameter")));
        }
    }
    let names = x.names().to_vec();
    let (model, importance) = match family {
        Family::Cart => {
            let tp = tree_params(params, 30, 2, 0.01)?;
            let rows: Vec<usize> = (0..y.len()).collect();
            let t = Tree::fit(x, y, &rows, &tp, None);
            let imp = t.importance(x.n_cols());
            (FittedModel::Cart(t), imp)
        }
        Family::RandomForest => {
            let mut tp = tree_params(params, usize::MAX, 5, 0.0)?;
            tp.mtry = Some(resolve_mtry(params, x.n_cols())?);
            let ntree = count(params, "ntree", 500)?.max(1);
            let bootstrap = num(params, "bootstrap", 1.0)? != 0.0;
            let f = Forest::fit(x, y, ntree, bootstrap, &tp, seed);
            let imp = f.importance(x.n_cols());
            (FittedModel::Forest(f), imp)
        }
        Family::Gbm => {
            let tp = tree_params(params, 3, 5, 0.0)?;
            let shrinkage = num(params, "shrinkage", 0.1)?;
            if !(shrinkage > 0.0 && shrinkage <= 1.0) {
                return Err(Error::contract(format!("shrinkage {shrinkage} outside (0, 1]")));
            }
            let rounds = count(params, "rounds", 100)?;
            let g = Boosted::fit(x, y, rounds, shrinkage, &tp);
            let imp = g.importance(x.n_cols());
            (FittedModel::Gbm(g), imp)
        }
        Family::OlsStepwise => {
            let cutoff = num(params, "cor_cutoff", 1.0)?;
            let m = LinearModel::fit(x, y, cutoff)?;
            let imp = m.importance(x.n_cols());
            (FittedModel::Ols(m), imp)
        }
        Family::Arima => {
            return Err(Error::contract("ARIMA is fitted on a series with arima_fit"));
        }
    };
    Ok(Regressor {
        version: MODEL_FORMAT_VERSION,
        family,
        params: params.clone(),
        importance: names.iter().cloned().zip(importance).collect(),
        features: names,
        model,
    })
}

/// Fit a spec whose grid holds exactly one point.
pub fn fit_spec(spec: &ModelSpec, x: &Design, y: &[f64]) -> Result<Regressor> {
    spec.validate()?;
    let points = spec.points();
    if points.len() != 1 {
        return Err(Error::contract(format!(
            "fit needs a single grid point, got {}; use grid_search",
            points.len()
        )));
    }
    fit(spec.family, &points[0], spec.seed, x, y)
}
