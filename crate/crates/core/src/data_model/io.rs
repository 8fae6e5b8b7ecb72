//! CSV ingestion and export for the four input files.
//!
//! prices.csv:   commodity,year,month,nominal_price,price_index
//! supply.csv:   commodity,kind,geo,level,year,value
//! regions.csv:  country,region,valid_from,valid_to
//! calendar.csv: commodity,geo,my_start_month

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    AnnualSupplySeries, GeoMapping, GeographyMap, Level, MonthlyPriceSeries, SupplyKind,
    TradeCalendar,
};
use crate::error::{Error, Result};
use crate::time::YearMonth;

/// All parsed inputs for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub prices: Vec<MonthlyPriceSeries>,
    pub supplies: Vec<AnnualSupplySeries>,
    pub map: GeographyMap,
    pub calendar: TradeCalendar,
}

impl Inputs {
    pub fn load(prices: &Path, supply: &Path, regions: &Path, calendar: &Path) -> Result<Self> {
        Ok(Self {
            prices: read_prices(open(prices)?, &prices.display().to_string())?,
            supplies: read_supply(open(supply)?, &supply.display().to_string())?,
            map: read_regions(open(regions)?, &regions.display().to_string())?,
            calendar: read_calendar(open(calendar)?, &calendar.display().to_string())?,
        })
    }

    pub fn price_series(&self, commodity: &str) -> Option<&MonthlyPriceSeries> {
        self.prices.iter().find(|p| p.commodity == commodity)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Header-indexed access to CSV records with located parse errors.
struct Table<R: Read> {
    file: String,
    reader: csv::Reader<R>,
    columns: Vec<usize>,
    names: &'static [&'static str],
}

impl<R: Read> Table<R> {
    fn new(rdr: R, file: &str, names: &'static [&'static str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(rdr);
        let headers = reader.headers()?.clone();
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let idx = headers
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}') == *name)
                .ok_or_else(|| Error::Parse {
                    file: file.to_string(),
                    row: 1,
                    column: name.to_string(),
                    message: "missing header column".into(),
                })?;
            columns.push(idx);
        }
        Ok(Self {
            file: file.to_string(),
            reader,
            columns,
            names,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(&Row<'_>) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let row = e.position().map_or(0, |p| p.line() as usize);
                Error::Parse {
                    file: self.file.clone(),
                    row,
                    column: String::new(),
                    message: e.to_string(),
                }
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line() as usize);
            f(&Row {
                table_file: &self.file,
                record: &record,
                columns: &self.columns,
                names: self.names,
                line,
            })?;
        }
    }
}

struct Row<'a> {
    table_file: &'a str,
    record: &'a csv::StringRecord,
    columns: &'a [usize],
    names: &'static [&'static str],
    line: usize,
}

impl Row<'_> {
    fn err(&self, col: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.table_file.to_string(),
            row: self.line,
            column: self.names[col].to_string(),
            message: message.into(),
        }
    }

    fn str(&self, col: usize) -> Result<&str> {
        match self.record.get(self.columns[col]) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(self.err(col, "empty field")),
        }
    }

    fn parse<T: FromStr>(&self, col: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.str(col)?;
        s.parse::<T>()
            .map_err(|e| self.err(col, format!("cannot parse `{s}`: {e}")))
    }

    fn real(&self, col: usize) -> Result<f64> {
        let v: f64 = self.parse(col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(col, "non-finite number"))
        }
    }

    fn month(&self, col: usize) -> Result<u8> {
        let m: u8 = self.parse(col)?;
        if (1..=12).contains(&m) {
            Ok(m)
        } else {
            Err(self.err(col, format!("month {m} outside 1..12")))
        }
    }
}

pub fn read_prices<R: Read>(rdr: R, file: &str) -> Result<Vec<MonthlyPriceSeries>> {
    const COLS: &[&str] = &["commodity", "year", "month", "nominal_price", "price_index"];
    let mut out: BTreeMap<String, MonthlyPriceSeries> = BTreeMap::new();
    Table::new(rdr, file, COLS)?.for_each(|row| {
        let commodity = row.str(0)?.to_string();
        let key = YearMonth::new(row.parse(1)?, row.month(2)?);
        let nominal = row.real(3)?;
        let index = row.real(4)?;
        let series = out
            .entry(commodity.clone())
            .or_insert_with(|| MonthlyPriceSeries::new(commodity));
        if series.nominal.insert(key, nominal).is_some() {
            return Err(row.err(1, format!("duplicate key {key}")));
        }
        series.index.insert(key, index);
        Ok(())
    })?;
    Ok(out.into_values().collect())
}

pub fn read_supply<R: Read>(rdr: R, file: &str) -> Result<Vec<AnnualSupplySeries>> {
    const COLS: &[&str] = &["commodity", "kind", "geo", "level", "year", "value"];
    let mut out: BTreeMap<(String, SupplyKind, String, Level), AnnualSupplySeries> =
        BTreeMap::new();
    Table::new(rdr, file, COLS)?.for_each(|row| {
        let commodity = row.str(0)?.to_string();
        let kind = SupplyKind::parse(row.str(1)?)
            .ok_or_else(|| row.err(1, "expected production, yield or stocks"))?;
        let geo = row.str(2)?.to_string();
        let level = Level::parse(row.str(3)?)
            .ok_or_else(|| row.err(3, "expected country or region"))?;
        let year: i32 = row.parse(4)?;
        let value = row.real(5)?;
        let series = out
            .entry((commodity.clone(), kind, geo.clone(), level))
            .or_insert_with(|| AnnualSupplySeries {
                commodity,
                kind,
                geo,
                level,
                values: BTreeMap::new(),
            });
        if series.values.insert(year, value).is_some() {
            return Err(row.err(4, format!("duplicate year {year}")));
        }
        Ok(())
    })?;
    Ok(out.into_values().collect())
}

pub fn read_regions<R: Read>(rdr: R, file: &str) -> Result<GeographyMap> {
    const COLS: &[&str] = &["country", "region", "valid_from", "valid_to"];
    let mut entries = Vec::new();
    Table::new(rdr, file, COLS)?.for_each(|row| {
        entries.push(GeoMapping {
            country: row.str(0)?.to_string(),
            region: row.str(1)?.to_string(),
            valid_from: row.parse(2)?,
            valid_to: row.parse(3)?,
        });
        Ok(())
    })?;
    Ok(GeographyMap::new(entries))
}

pub fn read_calendar<R: Read>(rdr: R, file: &str) -> Result<TradeCalendar> {
    const COLS: &[&str] = &["commodity", "geo", "my_start_month"];
    let mut cal = TradeCalendar::default();
    Table::new(rdr, file, COLS)?.for_each(|row| {
        let commodity = row.str(0)?;
        let geo = row.str(1)?;
        if cal
            .entries
            .contains_key(&(commodity.to_string(), geo.to_string()))
        {
            return Err(row.err(1, format!("duplicate calendar entry for {geo}")));
        }
        cal.insert(commodity, geo, row.month(2)?);
        Ok(())
    })?;
    Ok(cal)
}

pub fn write_prices<W: Write>(w: W, series: &[MonthlyPriceSeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["commodity", "year", "month", "nominal_price", "price_index"])?;
    for s in series {
        for (key, nominal) in &s.nominal {
            let index = s.index.get(key).copied().unwrap_or(f64::NAN);
            wtr.write_record([
                s.commodity.clone(),
                key.year.to_string(),
                key.month.to_string(),
                nominal.to_string(),
                index.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_supply<W: Write>(w: W, series: &[AnnualSupplySeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["commodity", "kind", "geo", "level", "year", "value"])?;
    for s in series {
        for (year, value) in &s.values {
            wtr.write_record([
                s.commodity.as_str(),
                s.kind.as_str(),
                s.geo.as_str(),
                s.level.as_str(),
                &year.to_string(),
                &value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_regions<W: Write>(w: W, map: &GeographyMap) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["country", "region", "valid_from", "valid_to"])?;
    for e in &map.entries {
        wtr.write_record([
            e.country.as_str(),
            e.region.as_str(),
            &e.valid_from.to_string(),
            &e.valid_to.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_calendar<W: Write>(w: W, cal: &TradeCalendar) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["commodity", "geo", "my_start_month"])?;
    for ((commodity, geo), m) in &cal.entries {
        wtr.write_record([commodity.as_str(), geo.as_str(), &m.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
