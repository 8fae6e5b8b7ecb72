//! Stage-1 data preparation: deflation, year-over-year changes, lagged
//! price features, marketing-year alignment and dataset assembly.

mod assemble;
mod frame;

use std::collections::BTreeMap;

use crate::data_model::{
    AnnualChanges, AnnualKey, AnnualSupplySeries, ChangeKind, MonthlyChanges, MonthlyPriceSeries,
    RelativeChangeSeries,
};
use crate::error::{Error, Result};
use crate::time::YearMonth;

pub use assemble::{
    aggregate_regions, assemble_datasets, build_column, build_frame, AssemblyOptions,
    ColumnSource, DatasetId, PreparedInputs,
};
pub use frame::{CutoffViolation, DroppedRow, FeatureColumn, FeatureFrame, ForecastRow};

/// Base year of the price index.
pub const BASE_YEAR: i32 = 2010;

/// Deflate nominal prices to real base-year USD:
/// `deflated = nominal * index(m, 2010) / index(m, y)`.
///
/// When the base year lacks an index value for month `m`, the base-year
/// annual mean of the index stands in.
pub fn deflate(series: &MonthlyPriceSeries) -> Result<MonthlyPriceSeries> {
    let base: Vec<(u8, f64)> = series
        .index
        .iter()
        .filter(|(k, _)| k.year == BASE_YEAR)
        .map(|(k, &v)| (k.month, v))
        .collect();
    if base.is_empty() {
        return Err(Error::Config(format!(
            "{}: no {BASE_YEAR} index data to deflate against",
            series.commodity
        )));
    }
    let base_mean = base.iter().map(|(_, v)| v).sum::<f64>() / base.len() as f64;
    let base_for = |m: u8| {
        base.iter()
            .find(|(bm, _)| *bm == m)
            .map_or(base_mean, |(_, v)| *v)
    };

    let mut out = series.clone();
    out.deflated.clear();
    for (key, &nominal) in &series.nominal {
        let Some(&idx) = series.index.get(key) else {
            continue;
        };
        if idx <= 0.0 {
            return Err(Error::Domain(format!(
                "{}: non-positive index {idx} at {key}",
                series.commodity
            )));
        }
        out.deflated.insert(*key, nominal * base_for(key.month) / idx);
    }
    Ok(out)
}

/// `(v(t) - v(t - 1 year)) / v(t - 1 year)` for every key with a positive
/// prior-year value. Entries without one are omitted and logged.
pub fn annual_relative_change<K: AnnualKey>(
    values: &BTreeMap<K, f64>,
    kind: ChangeKind,
) -> RelativeChangeSeries<K> {
    let mut out = BTreeMap::new();
    for (&key, &v) in values {
        match values.get(&key.prev_year()) {
            Some(&prev) if prev > 0.0 && v.is_finite() => {
                out.insert(key, (v - prev) / prev);
            }
            Some(&prev) => {
                log::debug!("event=change_omitted key={key:?} prev={prev}");
            }
            None => {}
        }
    }
    RelativeChangeSeries { kind, values: out }
}

/// Year-over-year changes of the deflated price.
pub fn price_changes(series: &MonthlyPriceSeries) -> MonthlyChanges {
    annual_relative_change(&series.deflated, ChangeKind::Price)
}

pub fn supply_changes(series: &AnnualSupplySeries) -> AnnualChanges {
    annual_relative_change(&series.values, ChangeKind::SupplyAnnual)
}

/// Issuance month of the forecast for target `(year, month)` at horizon `h`.
pub fn issuance(year: i32, month: u8, horizon: u8) -> YearMonth {
    YearMonth::new(year, month).sub_months(horizon as i64)
}

/// A value together with the month from which it is observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub observed_at: YearMonth,
}

/// Lagged price-change cell for one issuance month: the change observed
/// `lag` months before issuance. A month's change is observable once the
/// month has closed, i.e. from the following month.
pub fn lag_cell(changes: &MonthlyChanges, issue: YearMonth, lag: u8) -> Option<Cell> {
    let t = issue.sub_months(lag as i64);
    changes.values.get(&t).map(|&value| Cell {
        value,
        observed_at: t.add_months(1),
    })
}

/// Latest change at or before `issue - lag`, used only for the unobserved
/// forecast row when the exact month lies beyond the data.
pub fn latest_lag_cell(changes: &MonthlyChanges, issue: YearMonth, lag: u8) -> Option<Cell> {
    let t = issue.sub_months(lag as i64);
    changes
        .values
        .range(..=t)
        .next_back()
        .map(|(&k, &value)| Cell {
            value,
            observed_at: k.add_months(1),
        })
}

/// Lagged price-change columns for target month `m` at horizon `h`, one
/// value per row year, named `<series>_lag<L>`.
pub fn lag_price_features(
    series: &str,
    changes: &MonthlyChanges,
    month: u8,
    horizon: u8,
    lags: &[u8],
    years: &[i32],
) -> Result<Vec<(String, Vec<Option<Cell>>)>> {
    check_cell(month, horizon)?;
    for &lag in lags {
        if lag == 0 {
            return Err(Error::contract(
                "lag 0 would use the issuance month's own price, which is not yet observable",
            ));
        }
        if lag > 12 {
            return Err(Error::contract(format!("lag {lag} outside 1..12")));
        }
    }
    Ok(lags
        .iter()
        .map(|&lag| {
            let cells = years
                .iter()
                .map(|&y| lag_cell(changes, issuance(y, month, horizon), lag))
                .collect();
            (format!("{series}_lag{lag}"), cells)
        })
        .collect())
}

/// Marketing year whose value is the most recent observable at `issue`:
/// a marketing year becomes observable from its start month onward.
pub fn marketing_year_at(issue: YearMonth, start_month: u8) -> i32 {
    if issue.month >= start_month {
        issue.year
    } else {
        issue.year - 1
    }
}

pub fn supply_cell(changes: &AnnualChanges, issue: YearMonth, start_month: u8) -> Option<Cell> {
    let my = marketing_year_at(issue, start_month);
    changes.values.get(&my).map(|&value| Cell {
        value,
        observed_at: YearMonth::new(my, start_month),
    })
}

pub fn latest_supply_cell(
    changes: &AnnualChanges,
    issue: YearMonth,
    start_month: u8,
) -> Option<Cell> {
    let my = marketing_year_at(issue, start_month);
    changes
        .values
        .range(..=my)
        .next_back()
        .map(|(&y, &value)| Cell {
            value,
            observed_at: YearMonth::new(y, start_month),
        })
}

/// Supply-change column aligned to the local marketing year for target
/// month `m` at horizon `h`.
pub fn align_trade_year(
    changes: &AnnualChanges,
    start_month: u8,
    month: u8,
    horizon: u8,
    years: &[i32],
) -> Result<Vec<Option<Cell>>> {
    check_cell(month, horizon)?;
    if !(1..=12).contains(&start_month) {
        return Err(Error::contract(format!("start month {start_month} outside 1..12")));
    }
    Ok(years
        .iter()
        .map(|&y| supply_cell(changes, issuance(y, month, horizon), start_month))
        .collect())
}

/// The `n` series with the greatest total over the covered period; ties go
/// to the lexicographically smaller geography code.
pub fn select_top_countries(supplies: &[AnnualSupplySeries], n: usize) -> Result<Vec<AnnualSupplySeries>> {
    if n == 0 {
        return Err(Error::contract("n must be at least 1"));
    }
    let mut ranked: Vec<&AnnualSupplySeries> = supplies.iter().collect();
    ranked.sort_by(|a, b| {
        b.total()
            .total_cmp(&a.total())
            .then_with(|| a.geo.cmp(&b.geo))
    });
    if ranked.len() < n {
        log::warn!(
            "event=top_selection_short requested={n} available={}",
            ranked.len()
        );
    }
    Ok(ranked.into_iter().take(n).cloned().collect())
}

fn check_cell(month: u8, horizon: u8) -> Result<()> {
    if !(1..=12).contains(&month) {
        return Err(Error::contract(format!("month {month} outside 1..12")));
    }
    if !(1..=12).contains(&horizon) {
        return Err(Error::contract(format!("horizon {horizon} outside 1..12")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
