use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ColumnSource;
use crate::error::{Error, Result};
use crate::model_zoo::Design;
use crate::time::YearMonth;

/// Name used for the target in long-format frame files.
pub const TARGET_COLUMN: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub source: ColumnSource,
    pub values: Vec<f64>,
    /// Month from which each cell is observable.
    pub observed_at: Vec<YearMonth>,
}

/// The unobserved row one step past the data: features only, no target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub year: i32,
    pub issuance: YearMonth,
    pub values: Vec<f64>,
    pub observed_at: Vec<YearMonth>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffViolation {
    pub year: i32,
    pub column: String,
    pub observed_at: YearMonth,
    pub issuance: YearMonth,
}

/// Design matrix for one (target month, horizon) cell: one row per year,
/// every cell a fractional change observable by the row's issuance month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub commodity: String,
    pub dataset: String,
    pub month: u8,
    pub horizon: u8,
    pub years: Vec<i32>,
    pub issuance: Vec<YearMonth>,
    pub target: Vec<f64>,
    pub columns: Vec<FeatureColumn>,
    pub forecast: Option<ForecastRow>,
    pub dropped_rows: Vec<DroppedRow>,
    pub dropped_columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FrameMetadata {
    commodity: String,
    dataset: String,
    month: u8,
    horizon: u8,
    issuance_rule: String,
    years: Vec<i32>,
    issuance: Vec<YearMonth>,
    columns: Vec<ColumnMetadata>,
    forecast: Option<ForecastMetadata>,
    dropped_rows: Vec<DroppedRow>,
    dropped_columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ColumnMetadata {
    name: String,
    source: ColumnSource,
    observed_at: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct ForecastMetadata {
    year: i32,
    issuance: YearMonth,
    observed_at: Vec<i64>,
}

const ISSUANCE_RULE: &str = "issuance = (year, target month) minus horizon months; \
a cell is usable when observable at or before its row's issuance month";

impl FeatureFrame {
    /// Frame from plain columns, for synthetic experiments. Every cell is
    /// treated as observable one month before issuance.
    pub fn from_columns(
        dataset: &str,
        month: u8,
        horizon: u8,
        years: Vec<i32>,
        columns: Vec<(String, Vec<f64>)>,
        target: Vec<f64>,
        forecast: Option<(i32, Vec<f64>)>,
    ) -> Result<Self> {
        if target.len() != years.len() {
            return Err(Error::contract("target length differs from row count"));
        }
        let issuance: Vec<YearMonth> = years
            .iter()
            .map(|&y| super::issuance(y, month, horizon))
            .collect();
        let mut cols = Vec::with_capacity(columns.len());
        for (name, values) in columns {
            if values.len() != years.len() {
                return Err(Error::contract(format!("column {name} has wrong length")));
            }
            cols.push(FeatureColumn {
                source: ColumnSource::Synthetic { name: name.clone() },
                observed_at: issuance.iter().map(|i| i.sub_months(1)).collect(),
                name,
                values,
            });
        }
        let forecast = match forecast {
            Some((year, values)) => {
                if values.len() != cols.len() {
                    return Err(Error::contract("forecast row has wrong width"));
                }
                let issue = super::issuance(year, month, horizon);
                Some(ForecastRow {
                    year,
                    issuance: issue,
                    observed_at: vec![issue.sub_months(1); values.len()],
                    values,
                })
            }
            None => None,
        };
        Ok(Self {
            commodity: "synthetic".into(),
            dataset: dataset.into(),
            month,
            horizon,
            years,
            issuance,
            target,
            columns: cols,
            forecast,
            dropped_rows: Vec::new(),
            dropped_columns: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.years.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// All observed rows as a design matrix.
    pub fn design(&self) -> Design {
        Design::new(
            self.feature_names(),
            self.columns.iter().map(|c| c.values.clone()).collect(),
        )
    }

    /// Observed rows `rows` as a design matrix plus targets.
    pub fn subset(&self, rows: &[usize]) -> (Design, Vec<f64>) {
        let cols = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c.values[r]).collect())
            .collect();
        (
            Design::new(self.feature_names(), cols),
            rows.iter().map(|&r| self.target[r]).collect(),
        )
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[r]).collect()
    }

    /// Keep only the named feature columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureFrame> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            let i = self
                .columns
                .iter()
                .position(|c| &c.name == n)
                .ok_or_else(|| Error::contract(format!("frame has no column {n}")))?;
            idx.push(i);
        }
        let mut out = self.clone();
        out.columns = idx.iter().map(|&i| self.columns[i].clone()).collect();
        if let Some(f) = &mut out.forecast {
            let src = self.forecast.as_ref().expect("cloned");
            f.values = idx.iter().map(|&i| src.values[i]).collect();
            f.observed_at = idx.iter().map(|&i| src.observed_at[i]).collect();
        }
        Ok(out)
    }

    /// Exhaustive scan of the information cutoff: every cell must be
    /// observable at or before its row's issuance month.
    pub fn cutoff_violations(&self) -> Vec<CutoffViolation> {
        let mut out = Vec::new();
        for col in &self.columns {
            for (r, &obs) in col.observed_at.iter().enumerate() {
                if obs > self.issuance[r] {
                    out.push(CutoffViolation {
                        year: self.years[r],
                        column: col.name.clone(),
                        observed_at: obs,
                        issuance: self.issuance[r],
                    });
                }
            }
        }
        if let Some(f) = &self.forecast {
            for (c, &obs) in f.observed_at.iter().enumerate() {
                if obs > f.issuance {
                    out.push(CutoffViolation {
                        year: f.year,
                        column: self.columns[c].name.clone(),
                        observed_at: obs,
                        issuance: f.issuance,
                    });
                }
            }
        }
        out
    }

    /// Long-format CSV `year,column,value`; the target appears as column
    /// `target` for observed rows only.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["year", "column", "value"])?;
        for (r, &year) in self.years.iter().enumerate() {
            let y = year.to_string();
            wtr.write_record([y.as_str(), TARGET_COLUMN, &self.target[r].to_string()])?;
            for col in &self.columns {
                wtr.write_record([y.as_str(), col.name.as_str(), &col.values[r].to_string()])?;
            }
        }
        if let Some(f) = &self.forecast {
            let y = f.year.to_string();
            for (col, v) in self.columns.iter().zip(&f.values) {
                wtr.write_record([y.as_str(), col.name.as_str(), &v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, w: W) -> Result<()> {
        let meta = FrameMetadata {
            commodity: self.commodity.clone(),
            dataset: self.dataset.clone(),
            month: self.month,
            horizon: self.horizon,
            issuance_rule: ISSUANCE_RULE.into(),
            years: self.years.clone(),
            issuance: self.issuance.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| ColumnMetadata {
                    name: c.name.clone(),
                    source: c.source.clone(),
                    observed_at: c.observed_at.iter().map(|t| t.index()).collect(),
                })
                .collect(),
            forecast: self.forecast.as_ref().map(|f| ForecastMetadata {
                year: f.year,
                issuance: f.issuance,
                observed_at: f.observed_at.iter().map(|t| t.index()).collect(),
            }),
            dropped_rows: self.dropped_rows.clone(),
            dropped_columns: self.dropped_columns.clone(),
        };
        serde_json::to_writer_pretty(w, &meta)?;
        Ok(())
    }

    /// Rebuild a frame from its long CSV and metadata document.
    pub fn read<R1: Read, R2: Read>(long_csv: R1, metadata: R2) -> Result<FeatureFrame> {
        let meta: FrameMetadata = serde_json::from_reader(metadata)?;
        let mut values: BTreeMap<(i32, String), f64> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(long_csv);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |column: &str, message: String| Error::Parse {
                file: "frame.csv".into(),
                row: i + 2,
                column: column.into(),
                message,
            };
            let year: i32 = rec[0]
                .parse()
                .map_err(|e| bad("year", format!("{e}")))?;
            let v: f64 = rec[2]
                .parse()
                .map_err(|e| bad("value", format!("{e}")))?;
            values.insert((year, rec[1].to_string()), v);
        }
        let get = |year: i32, name: &str| {
            values.get(&(year, name.to_string())).copied().ok_or_else(|| {
                Error::Stage(format!("frame file lacks {name} for {year}"))
            })
        };
        let target = meta
            .years
            .iter()
            .map(|&y| get(y, TARGET_COLUMN))
            .collect::<Result<Vec<_>>>()?;
        let mut columns = Vec::with_capacity(meta.columns.len());
        for c in &meta.columns {
            columns.push(FeatureColumn {
                name: c.name.clone(),
                source: c.source.clone(),
                values: meta
                    .years
                    .iter()
                    .map(|&y| get(y, &c.name))
                    .collect::<Result<Vec<_>>>()?,
                observed_at: c.observed_at.iter().map(|&t| YearMonth::from_index(t)).collect(),
            });
        }
        let forecast = match &meta.forecast {
            Some(f) => Some(ForecastRow {
                year: f.year,
                issuance: f.issuance,
                values: meta
                    .columns
                    .iter()
                    .map(|c| get(f.year, &c.name))
                    .collect::<Result<Vec<_>>>()?,
                observed_at: f.observed_at.iter().map(|&t| YearMonth::from_index(t)).collect(),
            }),
            None => None,
        };
        Ok(FeatureFrame {
            commodity: meta.commodity,
            dataset: meta.dataset,
            month: meta.month,
            horizon: meta.horizon,
            years: meta.years,
            issuance: meta.issuance,
            target,
            columns,
            forecast,
            dropped_rows: meta.dropped_rows,
            dropped_columns: meta.dropped_columns,
        })
    }
}
