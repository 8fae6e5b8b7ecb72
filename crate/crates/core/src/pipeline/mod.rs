//! Stage orchestration and artifact I/O.
//!
//! Every stage reads its prerequisites from the output directory, writes
//! its outputs atomically and records their digests in `manifest.json`.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{cell_key, ArimaSearch, Config, ForecastOptions, InputPaths};
pub use manifest::{sha256_file, write_atomic, CellState, CellStatus, RunManifest, StageRecord};

use crate::data_model::{validate_dataset, Inputs, ValidationReport};
use crate::error::{Error, Result};
use crate::explain::{cell_beeswarm, explain_cell, CellExplanation};
use crate::forecasting::{
    best_model_per_cell, naive_rolling, read_forecasts_csv, rolling_forecast, rolling_targets,
    score_records, sort_records, ts_rolling_forecast, ts_training_end, write_forecasts_csv,
    ArimaCache, ForecastRecord, ModelScore, NAIVE,
};
use crate::model_zoo::{arima_order_search, fit, grid_search, ArimaOrder, Family, ModelSpec};
use crate::par;
use crate::rng::{derive_seed, tag};
use crate::screening::{screen_cell, ScreeningResult};
use crate::transform::{assemble_datasets, build_frame, issuance, FeatureFrame, PreparedInputs};

pub const VALIDATION: &str = "validation.json";
pub const ASSEMBLY: &str = "assembly.json";
pub const SCREENING: &str = "screening.json";
pub const FORECASTS: &str = "forecasts.csv";
pub const METRICS: &str = "metrics.csv";
pub const EXPLANATIONS: &str = "explanations.json";
pub const REPORT: &str = "report.json";
pub const FRAMES_DIR: &str = "frames";
pub const PLOTDATA_DIR: &str = "plotdata";
pub const SCREENED: &str = "screened";

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_PREREQUISITE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Validate,
    Assemble,
    Screen,
    Forecast,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Validate,
        Stage::Assemble,
        Stage::Screen,
        Stage::Forecast,
        Stage::Explain,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Assemble => "assemble",
            Stage::Screen => "screen",
            Stage::Forecast => "forecast",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Command-line restrictions on which cells a stage processes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub only_month: Option<u8>,
    pub only_horizon: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub cells: BTreeMap<String, CellStatus>,
    pub outputs: Vec<PathBuf>,
}

impl StageOutcome {
    pub fn failed_cells(&self) -> usize {
        self.cells.values().filter(|c| c.status == CellState::Error).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed_cells() > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation { .. } | Error::Parse { .. } => EXIT_VALIDATION,
        Error::Prerequisite(_) => EXIT_PREREQUISITE,
        _ => EXIT_FAILURE,
    }
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Prerequisite(p))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Collects the files a stage writes.
struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = rel.as_ref();
        write_atomic(&self.dir.join(rel), bytes)?;
        self.written.push(rel.to_path_buf());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        self.put(rel, &json_bytes(value)?)
    }
}

fn frame_paths(month: u8, horizon: u8, dataset: &str) -> (PathBuf, PathBuf) {
    let dir = Path::new(FRAMES_DIR).join(cell_key(month, horizon));
    (dir.join(format!("{dataset}.csv")), dir.join(format!("{dataset}.meta.json")))
}

fn write_frame(w: &mut Writer<'_>, frame: &FeatureFrame) -> Result<()> {
    let (csv_path, meta_path) = frame_paths(frame.month, frame.horizon, &frame.dataset);
    let mut csv_bytes = Vec::new();
    frame.write_long_csv(&mut csv_bytes)?;
    let mut meta = Vec::new();
    frame.write_metadata(&mut meta)?;
    meta.push(b'\n');
    w.put(csv_path, &csv_bytes)?;
    w.put(meta_path, &meta)
}

fn read_frame(dir: &Path, month: u8, horizon: u8, dataset: &str) -> Result<FeatureFrame> {
    let (c, m) = frame_paths(month, horizon, dataset);
    let c = require(dir, &c.to_string_lossy())?;
    let m = require(dir, &m.to_string_lossy())?;
    FeatureFrame::read(BufReader::new(File::open(c)?), BufReader::new(File::open(m)?))
}

fn load_inputs(cfg: &Config) -> Result<Inputs> {
    Inputs::load(
        &cfg.inputs.prices,
        &cfg.inputs.supply,
        &cfg.inputs.regions,
        &cfg.inputs.calendar,
    )
}

/// Run one stage. Per-cell failures are recorded in the outcome and the
/// manifest; an error is returned only when the stage as a whole fails.
pub fn run_stage(stage: Stage, cfg: &Config, opts: &RunOptions) -> Result<StageOutcome> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::open(dir, cfg)?;
    let cells = cfg.cells(opts.only_month, opts.only_horizon);
    if cells.is_empty() {
        return Err(Error::Config("the cell filters select no (month, horizon) cell".into()));
    }
    log::info!("stage={stage} event=start cells={}", cells.len());
    let mut w = Writer { dir, written: Vec::new() };
    let result = match stage {
        Stage::Validate => validate_stage(cfg, &mut w),
        Stage::Assemble => assemble_stage(cfg, &cells, &mut w),
        Stage::Screen => screen_stage(cfg, &cells, &mut w),
        Stage::Forecast => forecast_stage(cfg, &cells, &mut w),
        Stage::Explain => explain_stage(cfg, &cells, &mut w),
        Stage::Report => report_stage(cfg, &cells, &mut w),
    };
    let mut record = StageRecord::default();
    for rel in &w.written {
        record
            .outputs
            .insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(&dir.join(rel))?);
    }
    let outcome = match result {
        Ok(cells) => {
            let all_failed = !cells.is_empty() && cells.values().all(|c| c.status == CellState::Error);
            record.completed = !all_failed;
            record.cells = cells.clone();
            manifest.stages.insert(stage.as_str().into(), record);
            manifest.save(dir)?;
            if all_failed {
                let first = cells.iter().next().expect("non-empty");
                return Err(Error::Stage(format!(
                    "{stage}: every cell failed (first: {} {})",
                    first.0,
                    first.1.reason.clone().unwrap_or_default()
                )));
            }
            StageOutcome { stage, cells, outputs: w.written }
        }
        Err(e) => {
            record.completed = false;
            manifest.stages.insert(stage.as_str().into(), record);
            manifest.save(dir)?;
            log::error!("stage={stage} event=failed reason={e}");
            return Err(e);
        }
    };
    log::info!(
        "stage={stage} event=done outputs={} failed_cells={}",
        outcome.outputs.len(),
        outcome.failed_cells()
    );
    Ok(outcome)
}

type CellMap = BTreeMap<String, CellStatus>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFile {
    pub hard: usize,
    pub soft: usize,
    pub report: ValidationReport,
}

fn validate_stage(cfg: &Config, w: &mut Writer<'_>) -> Result<CellMap> {
    let inputs = load_inputs(cfg)?;
    if inputs.price_series(&cfg.commodity).is_none() {
        return Err(Error::Config(format!("prices.csv has no series for {}", cfg.commodity)));
    }
    let report = validate_dataset(&inputs.prices, &inputs.supplies, &inputs.map, &inputs.calendar);
    let hard = report.hard_violations().count();
    let file = ValidationFile {
        hard,
        soft: report.violations.len() - hard,
        report: report.clone(),
    };
    w.json(VALIDATION, &file)?;
    report.into_result()?;
    Ok(CellMap::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub dataset: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub first_year: i32,
    pub last_year: i32,
    pub forecast_year: Option<i32>,
    pub dropped_rows: usize,
    pub dropped_columns: Vec<String>,
}

impl FrameSummary {
    fn of(f: &FeatureFrame) -> Self {
        Self {
            dataset: f.dataset.clone(),
            rows: f.n_rows(),
            columns: f.feature_names(),
            first_year: f.years.first().copied().unwrap_or_default(),
            last_year: f.years.last().copied().unwrap_or_default(),
            forecast_year: f.forecast.as_ref().map(|r| r.year),
            dropped_rows: f.dropped_rows.len(),
            dropped_columns: f.dropped_columns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyCell {
    pub month: u8,
    pub horizon: u8,
    pub frames: Vec<FrameSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyFile {
    pub config_hash: String,
    pub commodity: String,
    pub cells: Vec<AssemblyCell>,
}

fn check_validated(dir: &Path) -> Result<()> {
    let v: ValidationFile = read_json(&require(dir, VALIDATION)?)?;
    if v.hard > 0 {
        let first = v.report.hard_violations().next().map(|x| x.to_string()).unwrap_or_default();
        return Err(Error::Validation { hard: v.hard, first });
    }
    Ok(())
}

fn assemble_stage(cfg: &Config, cells: &[(u8, u8)], w: &mut Writer<'_>) -> Result<CellMap> {
    check_validated(w.dir)?;
    let inputs = load_inputs(cfg)?;
    let prep = PreparedInputs::new(&inputs, &cfg.commodity, &cfg.assembly)?;
    let built = par::map(cells, |&(m, h)| assemble_datasets(&prep, m, h));
    let mut status = CellMap::new();
    let mut summary = Vec::new();
    for (&(m, h), frames) in cells.iter().zip(built) {
        let key = cell_key(m, h);
        match frames {
            Ok(frames) => {
                for f in &frames {
                    write_frame(w, f)?;
                }
                summary.push(AssemblyCell {
                    month: m,
                    horizon: h,
                    frames: frames.iter().map(FrameSummary::of).collect(),
                });
                status.insert(key, CellStatus::done());
            }
            Err(e) => {
                log::warn!("stage=assemble cell={key} event=cell_failed reason={e}");
                status.insert(key, CellStatus::error(e.to_string()));
            }
        }
    }
    w.json(
        ASSEMBLY,
        &AssemblyFile {
            config_hash: cfg.digest(),
            commodity: cfg.commodity.clone(),
            cells: summary,
        },
    )?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningFile {
    pub config_hash: String,
    pub commodity: String,
    pub cells: Vec<ScreeningResult>,
}

fn screen_stage(cfg: &Config, cells: &[(u8, u8)], w: &mut Writer<'_>) -> Result<CellMap> {
    let assembly: AssemblyFile = read_json(&require(w.dir, ASSEMBLY)?)?;
    let specs = cfg.model_specs();
    let mut status = CellMap::new();
    let mut jobs = Vec::new();
    for &(m, h) in cells {
        let key = cell_key(m, h);
        let Some(cell) = assembly.cells.iter().find(|c| c.month == m && c.horizon == h) else {
            status.insert(key, CellStatus::skipped("not assembled"));
            continue;
        };
        let frames = cell
            .frames
            .iter()
            .map(|f| read_frame(w.dir, m, h, &f.dataset))
            .collect::<Result<Vec<_>>>()?;
        jobs.push(((m, h), frames));
    }
    let results = par::map(&jobs, |((m, h), frames)| {
        log::info!("stage=screen cell={} event=start", cell_key(*m, *h));
        screen_cell(frames, &specs, &cfg.screening)
    });
    let mut out = Vec::new();
    for (((m, h), _), r) in jobs.iter().zip(results) {
        let key = cell_key(*m, *h);
        match r {
            Ok(r) => {
                status.insert(key, CellStatus::done());
                out.push(r);
            }
            Err(e) => {
                log::warn!("stage=screen cell={key} event=cell_failed reason={e}");
                status.insert(key, CellStatus::error(e.to_string()));
            }
        }
    }
    w.json(
        SCREENING,
        &ScreeningFile {
            config_hash: cfg.digest(),
            commodity: cfg.commodity.clone(),
            cells: out,
        },
    )?;
    Ok(status)
}

fn family_seed(cfg: &Config, stage: &str, m: u8, h: u8, family: Family) -> u64 {
    derive_seed(cfg.seed, &[tag(stage), m as u64, h as u64, tag(family.as_str())])
}

/// Choose the ARIMA order once, on the changes observable at the earliest
/// training cut-off of any selected cell, so no cell sees later data.
fn choose_arima_order(
    cfg: &Config,
    search: &ArimaSearch,
    prep: &PreparedInputs,
    frames: &[FeatureFrame],
) -> Result<ArimaOrder> {
    let series = prep.target_changes();
    let last = *series
        .values
        .keys()
        .next_back()
        .ok_or_else(|| Error::Stage("empty target series".into()))?;
    let mut earliest = None;
    for f in frames {
        if let Some(&(year, _)) = rolling_targets(f, cfg.forecasting.t_min).ok().and_then(|t| t.first().copied()).as_ref() {
            let end = ts_training_end(issuance(year, f.month, f.horizon), last);
            earliest = Some(earliest.map_or(end, |e: crate::YearMonth| e.min(end)));
        }
    }
    let end = earliest.ok_or_else(|| Error::Stage("no cell has rolling targets".into()))?;
    let prefix: Vec<f64> = series.values.range(..=end).map(|(_, &v)| v).collect();
    if prefix.len() < cfg.forecasting.ts_min_obs {
        return Err(Error::Stage(format!(
            "ARIMA order search: {} monthly observations up to {end}, need {}",
            prefix.len(),
            cfg.forecasting.ts_min_obs
        )));
    }
    let order = arima_order_search(&prefix, search.max_p, search.max_q, search.adf_alpha)?;
    log::info!("stage=forecast event=arima_order order={order} train_end={end}");
    Ok(order)
}

fn forecast_stage(cfg: &Config, cells: &[(u8, u8)], w: &mut Writer<'_>) -> Result<CellMap> {
    let screening: ScreeningFile = read_json(&require(w.dir, SCREENING)?)?;
    let inputs = load_inputs(cfg)?;
    let prep = PreparedInputs::new(&inputs, &cfg.commodity, &cfg.assembly)?;
    let mut status = CellMap::new();
    let mut frames = Vec::new();
    for &(m, h) in cells {
        let key = cell_key(m, h);
        let Some(res) = screening.cells.iter().find(|c| c.month == m && c.horizon == h) else {
            status.insert(key, CellStatus::skipped("not screened"));
            continue;
        };
        match build_frame(&prep, SCREENED, &res.retained_sources(), m, h) {
            Ok(f) if f.n_rows() >= cfg.forecasting.t_min => {
                write_frame(w, &f)?;
                frames.push(f);
            }
            Ok(f) => {
                write_frame(w, &f)?;
                status.insert(
                    key,
                    CellStatus::skipped(format!("{} rows, fewer than T_min = {}", f.n_rows(), cfg.forecasting.t_min)),
                );
            }
            Err(e) => {
                status.insert(key, CellStatus::error(e.to_string()));
            }
        }
    }

    let arima = match &cfg.forecasting.arima {
        Some(search) if !frames.is_empty() => match choose_arima_order(cfg, search, &prep, &frames) {
            Ok(o) => Some(o),
            Err(e) => {
                log::warn!("stage=forecast event=arima_disabled reason={e}");
                None
            }
        },
        _ => None,
    };
    let cache = Arc::new(ArimaCache::new());
    let specs = cfg.model_specs();
    let per_cell = par::map(&frames, |f| -> (Vec<ForecastRecord>, Vec<String>) {
        let (m, h) = (f.month, f.horizon);
        log::info!("stage=forecast cell={} event=start", cell_key(m, h));
        let mut recs = Vec::new();
        let mut problems = Vec::new();
        for spec in &specs {
            let s = ModelSpec {
                seed: family_seed(cfg, "forecast", m, h, spec.family),
                ..spec.clone()
            };
            match rolling_forecast(f, &s, cfg.forecasting.t_min, cfg.forecasting.inner_folds) {
                Ok(r) => recs.extend(r),
                Err(e) => problems.push(format!("{}: {e}", spec.family)),
            }
        }
        match naive_rolling(f, cfg.forecasting.t_min) {
            Ok(r) => recs.extend(r),
            Err(e) => problems.push(format!("{NAIVE}: {e}")),
        }
        if let Some(order) = arima {
            let ts = rolling_targets(f, cfg.forecasting.t_min).and_then(|targets| {
                ts_rolling_forecast(&cfg.commodity, prep.target_changes(), order, m, h, &targets, &cache)
            });
            match ts {
                Ok(r) => recs.extend(r),
                Err(e) => problems.push(format!("arima: {e}")),
            }
        }
        (recs, problems)
    });

    let mut records = Vec::new();
    for (f, (recs, problems)) in frames.iter().zip(per_cell) {
        let key = cell_key(f.month, f.horizon);
        let st = if recs.iter().all(|r| r.model == NAIVE) {
            CellStatus::error(problems.join("; "))
        } else if problems.is_empty() {
            CellStatus::done()
        } else {
            log::warn!("stage=forecast cell={key} event=models_failed reason={}", problems.join("; "));
            CellStatus {
                status: CellState::Done,
                reason: Some(problems.join("; ")),
            }
        };
        status.insert(key, st);
        records.extend(recs);
    }
    sort_records(&mut records);
    let mut buf = Vec::new();
    write_forecasts_csv(&records, &mut buf)?;
    w.put(FORECASTS, &buf)?;
    let scores = score_records(&records)?;
    let mut buf = Vec::new();
    write_metrics_csv(&cfg.commodity, &scores, &mut buf)?;
    w.put(METRICS, &buf)?;
    Ok(status)
}

/// `commodity,month,horizon,model,dataset,n,mae,mad,mape,mse,rmse,ra`
pub fn write_metrics_csv<W: std::io::Write>(commodity: &str, scores: &[ModelScore], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "commodity", "month", "horizon", "model", "dataset", "n", "mae", "mad", "mape", "mse", "rmse", "ra",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in scores {
        let m = &s.metrics;
        out.write_record([
            commodity.to_string(),
            s.month.to_string(),
            s.horizon.to_string(),
            s.model.clone(),
            s.dataset.clone(),
            m.n.to_string(),
            m.mae.to_string(),
            m.mad.to_string(),
            opt(m.mape),
            m.mse.to_string(),
            m.rmse.to_string(),
            opt(m.ra),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn records_by_cell(records: Vec<ForecastRecord>) -> BTreeMap<(u8, u8), Vec<ForecastRecord>> {
    let mut by: BTreeMap<(u8, u8), Vec<ForecastRecord>> = BTreeMap::new();
    for r in records {
        by.entry((r.target_month, r.horizon)).or_default().push(r);
    }
    by
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainedCell {
    /// Best model of the cell over all families, ARIMA included.
    pub winner: String,
    #[serde(flatten)]
    pub explanation: CellExplanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub month: u8,
    pub horizon: u8,
    pub feature: String,
    pub influence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationsFile {
    pub config_hash: String,
    pub commodity: String,
    pub influence_matrix: Vec<InfluenceRow>,
    pub cells: Vec<ExplainedCell>,
}

fn explain_one(
    cfg: &Config,
    frame: &FeatureFrame,
    records: &[ForecastRecord],
) -> Result<ExplainedCell> {
    let (m, h) = (frame.month, frame.horizon);
    let scores = score_records(records)?;
    let winner = best_model_per_cell(&scores)
        .remove(&(m, h))
        .map(|s| s.model)
        .ok_or_else(|| Error::Stage("no scored model".into()))?;
    let frame_scores: Vec<ModelScore> = scores
        .into_iter()
        .filter(|s| Family::parse(&s.model).is_some_and(|f| cfg.models.contains_key(&f)))
        .collect();
    let best = best_model_per_cell(&frame_scores)
        .remove(&(m, h))
        .ok_or_else(|| Error::Stage("no frame-based model to explain".into()))?;
    let family = Family::parse(&best.model).expect("filtered");
    let spec = ModelSpec {
        family,
        grid: cfg.models[&family].clone(),
        seed: family_seed(cfg, "explain", m, h, family),
    };
    let x = frame.design();
    let params = grid_search(&spec, &x, &frame.target, cfg.forecasting.inner_folds)?.best;
    let model = fit(family, &params, spec.seed, &x, &frame.target)?;
    let own: Vec<ForecastRecord> = records.iter().filter(|r| r.model == best.model).cloned().collect();
    let explanation = explain_cell(&model, frame, &own, &cfg.explain, derive_seed(cfg.seed, &[tag("explain")]))?;
    Ok(ExplainedCell { winner, explanation })
}

fn explain_stage(cfg: &Config, cells: &[(u8, u8)], w: &mut Writer<'_>) -> Result<CellMap> {
    let forecasts = require(w.dir, FORECASTS)?;
    require(w.dir, SCREENING)?;
    let mut by_cell = records_by_cell(read_forecasts_csv(BufReader::new(File::open(forecasts)?))?);
    let mut status = CellMap::new();
    let mut jobs = Vec::new();
    for &(m, h) in cells {
        let key = cell_key(m, h);
        let Some(recs) = by_cell.remove(&(m, h)) else {
            status.insert(key, CellStatus::skipped("no forecast records"));
            continue;
        };
        jobs.push((read_frame(w.dir, m, h, SCREENED)?, recs));
    }
    let results = par::map(&jobs, |(frame, recs)| {
        log::info!("stage=explain cell={} event=start", cell_key(frame.month, frame.horizon));
        explain_one(cfg, frame, recs)
    });
    let mut out = Vec::new();
    let mut beeswarm = csv::Writer::from_writer(Vec::new());
    beeswarm.write_record(["month", "horizon", "instance", "feature", "phi", "value", "rank"])?;
    let mut pdp = csv::Writer::from_writer(Vec::new());
    pdp.write_record(["month", "horizon", "feature", "bin", "value", "phi", "lower", "upper", "count"])?;
    let mut influence = Vec::new();
    for ((frame, _), r) in jobs.iter().zip(results) {
        let (m, h) = (frame.month, frame.horizon);
        let key = cell_key(m, h);
        match r {
            Ok(cell) => {
                let (ms, hs) = (m.to_string(), h.to_string());
                for row in cell_beeswarm(&cell.explanation, frame)? {
                    beeswarm.write_record([
                        ms.clone(),
                        hs.clone(),
                        row.instance.to_string(),
                        row.feature,
                        row.phi.to_string(),
                        row.value.to_string(),
                        row.rank.to_string(),
                    ])?;
                }
                for curve in &cell.explanation.pdp {
                    for (i, b) in curve.curve.iter().enumerate() {
                        pdp.write_record([
                            ms.clone(),
                            hs.clone(),
                            curve.feature.clone(),
                            i.to_string(),
                            b.value.to_string(),
                            b.phi.to_string(),
                            b.lower.to_string(),
                            b.upper.to_string(),
                            b.count.to_string(),
                        ])?;
                    }
                }
                for (feature, &v) in &cell.explanation.influence {
                    influence.push(InfluenceRow {
                        month: m,
                        horizon: h,
                        feature: feature.clone(),
                        influence: v,
                    });
                }
                status.insert(key, CellStatus::done());
                out.push(cell);
            }
            Err(e) => {
                log::warn!("stage=explain cell={key} event=cell_failed reason={e}");
                status.insert(key, CellStatus::error(e.to_string()));
            }
        }
    }
    let mut infl = csv::Writer::from_writer(Vec::new());
    infl.write_record(["month", "horizon", "feature", "influence"])?;
    for r in &influence {
        infl.write_record([r.month.to_string(), r.horizon.to_string(), r.feature.clone(), r.influence.to_string()])?;
    }
    let finish = |wtr: csv::Writer<Vec<u8>>| -> Result<Vec<u8>> {
        wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    };
    w.put(Path::new(PLOTDATA_DIR).join("beeswarm.csv"), &finish(beeswarm)?)?;
    w.put(Path::new(PLOTDATA_DIR).join("pdp.csv"), &finish(pdp)?)?;
    w.put(Path::new(PLOTDATA_DIR).join("influence.csv"), &finish(infl)?)?;
    w.json(
        EXPLANATIONS,
        &ExplanationsFile {
            config_hash: cfg.digest(),
            commodity: cfg.commodity.clone(),
            influence_matrix: influence,
            cells: out,
        },
    )?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub ra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub month: u8,
    pub horizon: u8,
    pub winner: String,
    pub mae: f64,
    pub ra: Option<f64>,
    pub models: BTreeMap<String, ModelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub commodity: String,
    /// One row per (month, horizon) with observed records.
    pub rows: Vec<ReportRow>,
    /// Months at horizon 1 where the winner's RA is positive.
    pub h1_positive_ra: usize,
    pub h1_months: usize,
}

fn report_stage(cfg: &Config, cells: &[(u8, u8)], w: &mut Writer<'_>) -> Result<CellMap> {
    let forecasts = require(w.dir, FORECASTS)?;
    require(w.dir, METRICS)?;
    let records = read_forecasts_csv(BufReader::new(File::open(forecasts)?))?;
    let wanted: Vec<ForecastRecord> = records
        .into_iter()
        .filter(|r| cells.contains(&(r.target_month, r.horizon)))
        .collect();
    let scores = score_records(&wanted)?;
    let winners = best_model_per_cell(&scores);
    let mut status = CellMap::new();
    let mut rows = Vec::new();
    for &(m, h) in cells {
        let key = cell_key(m, h);
        let Some(win) = winners.get(&(m, h)) else {
            status.insert(key, CellStatus::skipped("no observed records"));
            continue;
        };
        let models = scores
            .iter()
            .filter(|s| s.month == m && s.horizon == h)
            .map(|s| {
                (
                    s.model.clone(),
                    ModelSummary {
                        n: s.metrics.n,
                        mae: s.metrics.mae,
                        rmse: s.metrics.rmse,
                        ra: s.metrics.ra,
                    },
                )
            })
            .collect();
        rows.push(ReportRow {
            month: m,
            horizon: h,
            winner: win.model.clone(),
            mae: win.metrics.mae,
            ra: win.metrics.ra,
            models,
        });
        status.insert(key, CellStatus::done());
    }
    let h1: Vec<&ReportRow> = rows.iter().filter(|r| r.horizon == 1).collect();
    let report = ReportFile {
        config_hash: cfg.digest(),
        commodity: cfg.commodity.clone(),
        h1_positive_ra: h1.iter().filter(|r| r.ra.is_some_and(|v| v > 0.0)).count(),
        h1_months: h1.len(),
        rows,
    };
    w.json(REPORT, &report)?;
    Ok(status)
}
