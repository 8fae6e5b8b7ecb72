use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explain::ExplainOptions;
use crate::forecasting::DEFAULT_T_MIN;
use crate::model_zoo::{Family, Grid, ModelSpec, ARIMA_MIN_OBS};
use crate::screening::ScreeningOptions;
use crate::transform::AssemblyOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub prices: PathBuf,
    pub supply: PathBuf,
    pub regions: PathBuf,
    pub calendar: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArimaSearch {
    pub max_p: usize,
    pub max_q: usize,
    /// Significance level of the ADF test that picks d.
    pub adf_alpha: f64,
}

impl Default for ArimaSearch {
    fn default() -> Self {
        Self {
            max_p: 3,
            max_q: 3,
            adf_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastOptions {
    pub t_min: usize,
    pub inner_folds: usize,
    /// Shortest monthly series the ARIMA path trains on.
    pub ts_min_obs: usize,
    /// `null` disables the ARIMA path.
    pub arima: Option<ArimaSearch>,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            t_min: DEFAULT_T_MIN,
            inner_folds: 5,
            ts_min_obs: ARIMA_MIN_OBS,
            arima: Some(ArimaSearch::default()),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn all_months() -> Vec<u8> {
    (1..=12).collect()
}

fn default_horizons() -> Vec<u8> {
    vec![1, 6, 12]
}

fn default_models() -> BTreeMap<Family, Grid> {
    [Family::RandomForest, Family::Cart, Family::Gbm, Family::OlsStepwise]
        .into_iter()
        .map(|f| (f, f.default_grid()))
        .collect()
}

/// One run's configuration. Relative paths resolve against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub commodity: String,
    pub inputs: InputPaths,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "all_months")]
    pub months: Vec<u8>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u8>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    /// Frame-based model families and their hyperparameter grids.
    #[serde(default = "default_models")]
    pub models: BTreeMap<Family, Grid>,
    #[serde(default)]
    pub screening: ScreeningOptions,
    #[serde(default)]
    pub forecasting: ForecastOptions,
    #[serde(default)]
    pub explain: ExplainOptions,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.inputs.prices,
            &mut cfg.inputs.supply,
            &mut cfg.inputs.regions,
            &mut cfg.inputs.calendar,
            &mut cfg.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.commodity.trim().is_empty() {
            return bad("commodity is empty".into());
        }
        if self.months.is_empty() || self.months.iter().any(|m| !(1..=12).contains(m)) {
            return bad(format!("months must be a non-empty subset of 1..12, got {:?}", self.months));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|h| !(1..=12).contains(h)) {
            return bad(format!("horizons must be a non-empty subset of 1..12, got {:?}", self.horizons));
        }
        if self.models.contains_key(&Family::Arima) {
            return bad("configure ARIMA under forecasting.arima, not models".into());
        }
        if self.models.is_empty() {
            return bad("at least one model family is required".into());
        }
        for spec in self.model_specs() {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.screening.inner_folds < 2 || self.forecasting.inner_folds < 2 {
            return bad("inner_folds must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.screening.max_failure_fraction) {
            return bad("screening.max_failure_fraction must lie in [0, 1]".into());
        }
        if self.screening.retain_top == 0 {
            return bad("screening.retain_top must be at least 1".into());
        }
        if self.forecasting.t_min < 2 {
            return bad("forecasting.t_min must be at least 2".into());
        }
        if self.forecasting.ts_min_obs < ARIMA_MIN_OBS {
            return bad(format!("forecasting.ts_min_obs must be at least {ARIMA_MIN_OBS}"));
        }
        if let Some(a) = &self.forecasting.arima {
            if !(a.adf_alpha > 0.0 && a.adf_alpha < 1.0) {
                return bad("forecasting.arima.adf_alpha must lie in (0, 1)".into());
            }
        }
        if self.explain.permutations == 0 || self.explain.background_max == 0 || self.explain.pdp_bins == 0 {
            return bad("explain permutations, background_max and pdp_bins must be positive".into());
        }
        Ok(())
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|(&family, grid)| ModelSpec {
                family,
                grid: grid.clone(),
                seed: self.seed,
            })
            .collect()
    }

    /// Digest of the canonical JSON form. Only input file names enter it
    /// and the output directory does not, so relocated runs share a hash;
    /// input contents are tracked by the manifest.
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        for p in [
            &mut canon.inputs.prices,
            &mut canon.inputs.supply,
            &mut canon.inputs.regions,
            &mut canon.inputs.calendar,
        ] {
            if let Some(name) = p.file_name() {
                *p = PathBuf::from(name);
            }
        }
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The (month, horizon) cells selected by the config and the optional
    /// command-line filters.
    pub fn cells(&self, only_month: Option<u8>, only_horizon: Option<u8>) -> Vec<(u8, u8)> {
        let mut months = self.months.clone();
        months.sort_unstable();
        months.dedup();
        let mut horizons = self.horizons.clone();
        horizons.sort_unstable();
        horizons.dedup();
        let mut out = Vec::new();
        for &m in months.iter().filter(|&&m| only_month.is_none_or(|o| o == m)) {
            for &h in horizons.iter().filter(|&&h| only_horizon.is_none_or(|o| o == h)) {
                out.push((m, h));
            }
        }
        out
    }
}

pub fn cell_key(month: u8, horizon: u8) -> String {
    format!("m{month:02}_h{horizon:02}")
}
