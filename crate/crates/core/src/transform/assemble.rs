use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::frame::{DroppedRow, FeatureColumn, FeatureFrame, ForecastRow};
use super::{
    deflate, issuance, lag_cell, latest_lag_cell, latest_supply_cell, price_changes,
    select_top_countries, supply_cell, supply_changes, Cell,
};
use crate::data_model::{
    AnnualChanges, AnnualSupplySeries, GeographyMap, Inputs, Level, MonthlyChanges, SupplyKind,
};
use crate::error::{Error, Result};
use crate::time::YearMonth;

/// Where a feature column comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ColumnSource {
    PriceLag { series: String, lag: u8 },
    Supply { kind: SupplyKind, level: Level, geo: String },
    Synthetic { name: String },
}

impl ColumnSource {
    pub fn name(&self) -> String {
        match self {
            ColumnSource::PriceLag { series, lag } => format!("{series}_lag{lag}"),
            ColumnSource::Supply { kind, level, geo } => {
                format!("{}_{}_{}", kind.as_str(), level.as_str(), geo)
            }
            ColumnSource::Synthetic { name } => name.clone(),
        }
    }
}

/// The four predictor sets: regional or local (top-country) supply, each
/// with production or yield, always with matching-level stocks and the
/// lagged monthly columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "R-P")]
    RegionalProduction,
    #[serde(rename = "R-Y")]
    RegionalYield,
    #[serde(rename = "L-P")]
    LocalProduction,
    #[serde(rename = "L-Y")]
    LocalYield,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [
        DatasetId::RegionalProduction,
        DatasetId::RegionalYield,
        DatasetId::LocalProduction,
        DatasetId::LocalYield,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::RegionalProduction => "R-P",
            DatasetId::RegionalYield => "R-Y",
            DatasetId::LocalProduction => "L-P",
            DatasetId::LocalYield => "L-Y",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyOptions {
    pub lags: Vec<u8>,
    /// Monthly series (by commodity name in prices.csv) used as lagged
    /// predictors. The target commodity is always included.
    pub monthly_predictors: Vec<String>,
    pub regional_supply_cap: usize,
    pub regional_stocks_cap: usize,
    pub local_cap: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            lags: vec![1, 2, 3, 6, 12],
            monthly_predictors: Vec::new(),
            regional_supply_cap: 19,
            regional_stocks_cap: 15,
            local_cap: 21,
        }
    }
}

#[derive(Debug, Clone)]
struct SupplyFeature {
    changes: AnnualChanges,
    start_month: u8,
}

/// Inputs reduced to change series plus the column list of each dataset.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub commodity: String,
    pub target: MonthlyChanges,
    monthly: BTreeMap<String, MonthlyChanges>,
    supply: BTreeMap<(SupplyKind, Level, String), SupplyFeature>,
    pub datasets: BTreeMap<DatasetId, Vec<ColumnSource>>,
    lags: Vec<u8>,
}

/// Sum production and stocks of member countries per region and year;
/// yield is the production-weighted mean of member yields.
pub fn aggregate_regions(
    countries: &[AnnualSupplySeries],
    map: &GeographyMap,
) -> Result<Vec<AnnualSupplySeries>> {
    let production: BTreeMap<(&str, &str), &AnnualSupplySeries> = countries
        .iter()
        .filter(|s| s.kind == SupplyKind::Production && s.level == Level::Country)
        .map(|s| ((s.commodity.as_str(), s.geo.as_str()), s))
        .collect();
    // (commodity, kind, region) -> year -> (numerator, denominator)
    let mut acc: BTreeMap<(String, SupplyKind, String), BTreeMap<i32, (f64, f64)>> =
        BTreeMap::new();
    for s in countries.iter().filter(|s| s.level == Level::Country) {
        for (&year, &v) in &s.values {
            let region = map.resolve(&s.geo, year)?.to_string();
            let slot = acc
                .entry((s.commodity.clone(), s.kind, region))
                .or_default()
                .entry(year)
                .or_insert((0.0, 0.0));
            match s.kind {
                SupplyKind::Yield => {
                    let weight = production
                        .get(&(s.commodity.as_str(), s.geo.as_str()))
                        .and_then(|p| p.values.get(&year));
                    match weight {
                        Some(&w) => {
                            slot.0 += v * w;
                            slot.1 += w;
                        }
                        None => log::debug!(
                            "event=yield_unweighted geo={} year={year}",
                            s.geo
                        ),
                    }
                }
                _ => slot.0 += v,
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|((commodity, kind, region), years)| AnnualSupplySeries {
            commodity,
            kind,
            geo: region,
            level: Level::Region,
            values: years
                .into_iter()
                .filter_map(|(y, (num, den))| match kind {
                    SupplyKind::Yield if den > 0.0 => Some((y, num / den)),
                    SupplyKind::Yield => None,
                    _ => Some((y, num)),
                })
                .collect(),
        })
        .collect())
}

fn ranked_geos(series: &[AnnualSupplySeries], kind: SupplyKind, n: usize) -> Result<Vec<String>> {
    let of_kind: Vec<AnnualSupplySeries> =
        series.iter().filter(|s| s.kind == kind).cloned().collect();
    if of_kind.is_empty() {
        return Ok(Vec::new());
    }
    Ok(select_top_countries(&of_kind, n)?
        .into_iter()
        .map(|s| s.geo)
        .collect())
}

impl PreparedInputs {
    pub fn new(inputs: &Inputs, commodity: &str, opts: &AssemblyOptions) -> Result<Self> {
        let target_series = inputs
            .price_series(commodity)
            .ok_or_else(|| Error::Config(format!("no price series for {commodity}")))?;
        let target = price_changes(&deflate(target_series)?);

        let mut monthly = BTreeMap::new();
        monthly.insert(commodity.to_string(), target.clone());
        for name in &opts.monthly_predictors {
            if monthly.contains_key(name) {
                continue;
            }
            let s = inputs
                .price_series(name)
                .ok_or_else(|| Error::Config(format!("no monthly series {name}")))?;
            monthly.insert(name.clone(), price_changes(&deflate(s)?));
        }

        let countries: Vec<AnnualSupplySeries> = inputs
            .supplies
            .iter()
            .filter(|s| s.commodity == commodity && s.level == Level::Country)
            .cloned()
            .collect();
        let mut regions: BTreeMap<(SupplyKind, String), AnnualSupplySeries> =
            aggregate_regions(&countries, &inputs.map)?
                .into_iter()
                .map(|s| ((s.kind, s.geo.clone()), s))
                .collect();
        // reported regional rows take precedence over aggregates
        for s in inputs
            .supplies
            .iter()
            .filter(|s| s.commodity == commodity && s.level == Level::Region)
        {
            regions.insert((s.kind, s.geo.clone()), s.clone());
        }
        let regions: Vec<AnnualSupplySeries> = regions.into_values().collect();

        let reg_prod = ranked_geos(&regions, SupplyKind::Production, opts.regional_supply_cap)?;
        let reg_stocks = ranked_geos(&regions, SupplyKind::Stocks, opts.regional_stocks_cap)?;
        let loc_prod = ranked_geos(&countries, SupplyKind::Production, opts.local_cap)?;
        let loc_stocks = ranked_geos(&countries, SupplyKind::Stocks, opts.local_cap)?;

        let mut supply = BTreeMap::new();
        let mut add = |series: &[AnnualSupplySeries], kind: SupplyKind, geos: &[String]| -> Result<Vec<ColumnSource>> {
            let mut out = Vec::new();
            for geo in geos {
                let Some(s) = series.iter().find(|s| s.kind == kind && &s.geo == geo) else {
                    continue;
                };
                let start_month = inputs
                    .calendar
                    .start_month(commodity, geo)
                    .ok_or_else(|| Error::Config(format!("no calendar entry for {geo}")))?;
                supply.insert(
                    (kind, s.level, geo.clone()),
                    SupplyFeature {
                        changes: supply_changes(s),
                        start_month,
                    },
                );
                out.push(ColumnSource::Supply {
                    kind,
                    level: s.level,
                    geo: geo.clone(),
                });
            }
            Ok(out)
        };
        let rp = add(&regions, SupplyKind::Production, &reg_prod)?;
        let ry = add(&regions, SupplyKind::Yield, &reg_prod)?;
        let rs = add(&regions, SupplyKind::Stocks, &reg_stocks)?;
        let lp = add(&countries, SupplyKind::Production, &loc_prod)?;
        let ly = add(&countries, SupplyKind::Yield, &loc_prod)?;
        let ls = add(&countries, SupplyKind::Stocks, &loc_stocks)?;

        let mut lag_cols = Vec::new();
        for series in monthly.keys() {
            for &lag in &opts.lags {
                lag_cols.push(ColumnSource::PriceLag {
                    series: series.clone(),
                    lag,
                });
            }
        }
        let join = |a: &[ColumnSource], b: &[ColumnSource]| -> Vec<ColumnSource> {
            a.iter().chain(b).chain(&lag_cols).cloned().collect()
        };
        let datasets = BTreeMap::from([
            (DatasetId::RegionalProduction, join(&rp, &rs)),
            (DatasetId::RegionalYield, join(&ry, &rs)),
            (DatasetId::LocalProduction, join(&lp, &ls)),
            (DatasetId::LocalYield, join(&ly, &ls)),
        ]);
        for &lag in &opts.lags {
            if !(1..=12).contains(&lag) {
                return Err(Error::Config(format!("lag {lag} outside 1..12")));
            }
        }
        Ok(Self {
            commodity: commodity.to_string(),
            target,
            monthly,
            supply,
            datasets,
            lags: opts.lags.clone(),
        })
    }

    pub fn lags(&self) -> &[u8] {
        &self.lags
    }

    /// Monthly change series of the target commodity.
    pub fn target_changes(&self) -> &MonthlyChanges {
        &self.target
    }

    pub fn last_price_month(&self) -> Option<YearMonth> {
        self.target.values.keys().next_back().copied()
    }
}

/// One column's cells for the given issuance months, plus the forecast-row
/// cell (latest observation when the exact one lies beyond the data).
pub fn build_column(
    prep: &PreparedInputs,
    source: &ColumnSource,
    issues: &[YearMonth],
    forecast_issue: Option<YearMonth>,
) -> Result<(Vec<Option<Cell>>, Option<Cell>)> {
    match source {
        ColumnSource::PriceLag { series, lag } => {
            let changes = prep
                .monthly
                .get(series)
                .ok_or_else(|| Error::Config(format!("unknown monthly series {series}")))?;
            let cells = issues.iter().map(|&i| lag_cell(changes, i, *lag)).collect();
            let fc = forecast_issue.and_then(|i| latest_lag_cell(changes, i, *lag));
            Ok((cells, fc))
        }
        ColumnSource::Supply { kind, level, geo } => {
            let feat = prep
                .supply
                .get(&(*kind, *level, geo.clone()))
                .ok_or_else(|| Error::Config(format!("unknown supply column {}", source.name())))?;
            let cells = issues
                .iter()
                .map(|&i| supply_cell(&feat.changes, i, feat.start_month))
                .collect();
            let fc = forecast_issue
                .and_then(|i| latest_supply_cell(&feat.changes, i, feat.start_month));
            Ok((cells, fc))
        }
        ColumnSource::Synthetic { name } => Err(Error::Config(format!(
            "synthetic column {name} cannot be rebuilt from inputs"
        ))),
    }
}

/// Build the frame for one cell from the given column sources. Rows with
/// any missing cell are dropped; columns constant over the kept rows are
/// dropped.
pub fn build_frame(
    prep: &PreparedInputs,
    dataset: &str,
    sources: &[ColumnSource],
    month: u8,
    horizon: u8,
) -> Result<FeatureFrame> {
    super::check_cell(month, horizon)?;
    let target_years: Vec<(i32, f64)> = prep
        .target
        .values
        .iter()
        .filter(|(k, _)| k.month == month)
        .map(|(k, &v)| (k.year, v))
        .collect();
    let Some(&(last_year, _)) = target_years.last() else {
        return Err(Error::Stage(format!(
            "{dataset} m={month} h={horizon}: no target observations"
        )));
    };
    let issues: Vec<YearMonth> = target_years
        .iter()
        .map(|&(y, _)| issuance(y, month, horizon))
        .collect();
    let forecast_year = last_year + 1;
    let forecast_issue = issuance(forecast_year, month, horizon);

    let mut built = Vec::with_capacity(sources.len());
    for src in sources {
        built.push((src, build_column(prep, src, &issues, Some(forecast_issue))?));
    }

    let mut keep = Vec::new();
    let mut dropped_rows = Vec::new();
    for (r, &(year, _)) in target_years.iter().enumerate() {
        match built.iter().find(|(_, (cells, _))| cells[r].is_none()) {
            None => keep.push(r),
            Some((src, _)) => dropped_rows.push(DroppedRow {
                year,
                reason: format!("missing {}", src.name()),
            }),
        }
    }
    if !dropped_rows.is_empty() {
        log::debug!(
            "event=rows_dropped dataset={dataset} m={month} h={horizon} count={}",
            dropped_rows.len()
        );
    }
    if keep.is_empty() {
        return Err(Error::Stage(format!(
            "{dataset} m={month} h={horizon}: frame is empty after dropping incomplete rows"
        )));
    }

    let mut columns = Vec::new();
    let mut dropped_columns = Vec::new();
    let mut forecast_cells = Vec::new();
    for (src, (cells, fc)) in built {
        let values: Vec<f64> = keep.iter().map(|&r| cells[r].expect("complete").value).collect();
        if values.iter().all(|&v| v == values[0]) {
            dropped_columns.push(src.name());
            continue;
        }
        columns.push(FeatureColumn {
            name: src.name(),
            source: src.clone(),
            observed_at: keep
                .iter()
                .map(|&r| cells[r].expect("complete").observed_at)
                .collect(),
            values,
        });
        forecast_cells.push(fc);
    }
    let forecast = if forecast_cells.iter().all(Option::is_some) {
        let cells: Vec<Cell> = forecast_cells.into_iter().flatten().collect();
        Some(ForecastRow {
            year: forecast_year,
            issuance: forecast_issue,
            values: cells.iter().map(|c| c.value).collect(),
            observed_at: cells.iter().map(|c| c.observed_at).collect(),
        })
    } else {
        None
    };

    Ok(FeatureFrame {
        commodity: prep.commodity.clone(),
        dataset: dataset.to_string(),
        month,
        horizon,
        years: keep.iter().map(|&r| target_years[r].0).collect(),
        issuance: keep.iter().map(|&r| issues[r]).collect(),
        target: keep.iter().map(|&r| target_years[r].1).collect(),
        columns,
        forecast,
        dropped_rows,
        dropped_columns,
    })
}

/// The four predictor frames for target month `m` at horizon `h`.
pub fn assemble_datasets(prep: &PreparedInputs, month: u8, horizon: u8) -> Result<Vec<FeatureFrame>> {
    prep.datasets
        .iter()
        .map(|(id, sources)| build_frame(prep, id.as_str(), sources, month, horizon))
        .collect()
}
