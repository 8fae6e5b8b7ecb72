//! Core domain types shared by every stage, plus CSV ingestion and
//! dataset validation.

mod io;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::YearMonth;

pub use io::{
    read_calendar, read_prices, read_regions, read_supply, write_calendar, write_prices,
    write_regions, write_supply, Inputs,
};
pub use validate::{validate_dataset, Severity, ValidationReport, Violation};

/// Monthly nominal prices and price index for one commodity (or one monthly
/// predictor series), with deflated prices once `transform::deflate` has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyPriceSeries {
    pub commodity: String,
    /// Nominal USD per metric ton.
    pub nominal: BTreeMap<YearMonth, f64>,
    /// Dimensionless, base 2010 ~ 100.
    pub index: BTreeMap<YearMonth, f64>,
    /// Real 2010 USD per metric ton.
    pub deflated: BTreeMap<YearMonth, f64>,
}

impl MonthlyPriceSeries {
    pub fn new(commodity: impl Into<String>) -> Self {
        Self {
            commodity: commodity.into(),
            nominal: BTreeMap::new(),
            index: BTreeMap::new(),
            deflated: BTreeMap::new(),
        }
    }

    /// Months between the first and last key that lack a nominal price or
    /// an index value. Gaps are reported, never filled.
    pub fn gaps(&self) -> Vec<YearMonth> {
        let keys: BTreeSet<YearMonth> = self.nominal.keys().chain(self.index.keys()).copied().collect();
        let (Some(first), Some(last)) = (keys.first(), keys.last()) else {
            return Vec::new();
        };
        (first.index()..=last.index())
            .map(YearMonth::from_index)
            .filter(|k| !(self.nominal.contains_key(k) && self.index.contains_key(k)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupplyKind {
    Production,
    Yield,
    Stocks,
}

impl SupplyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SupplyKind::Production => "production",
            SupplyKind::Yield => "yield",
            SupplyKind::Stocks => "stocks",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            SupplyKind::Production => "tonnes/year",
            SupplyKind::Yield => "hg/ha",
            SupplyKind::Stocks => "1000 mt/year",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "production" => Some(SupplyKind::Production),
            "yield" => Some(SupplyKind::Yield),
            "stocks" | "beginning-stocks" | "beginning_stocks" => Some(SupplyKind::Stocks),
            _ => None,
        }
    }
}

impl fmt::Display for SupplyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Country,
    Region,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Country => "country",
            Level::Region => "region",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" => Some(Level::Country),
            "region" => Some(Level::Region),
            _ => None,
        }
    }
}

/// Annual production, yield or beginning stocks for one geography. The year
/// is the local marketing year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSupplySeries {
    pub commodity: String,
    pub kind: SupplyKind,
    pub geo: String,
    pub level: Level,
    pub values: BTreeMap<i32, f64>,
}

impl AnnualSupplySeries {
    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoMapping {
    pub country: String,
    pub region: String,
    pub valid_from: i32,
    pub valid_to: i32,
}

/// Country → region assignment with validity windows, so historical
/// entities land in present-day regions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeographyMap {
    pub entries: Vec<GeoMapping>,
}

impl GeographyMap {
    pub fn new(entries: Vec<GeoMapping>) -> Self {
        Self { entries }
    }

    pub fn contains_country(&self, country: &str) -> bool {
        self.entries.iter().any(|e| e.country == country)
    }

    pub fn regions(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.region.as_str()).collect()
    }

    /// Region of `country` in `year`; an error when the country is unknown or
    /// no mapping is active that year.
    pub fn resolve(&self, country: &str, year: i32) -> Result<&str> {
        let mut active = self
            .entries
            .iter()
            .filter(|e| e.country == country && e.valid_from <= year && year <= e.valid_to);
        match (active.next(), active.next()) {
            (Some(e), None) => Ok(&e.region),
            (Some(_), Some(_)) => Err(Error::Domain(format!(
                "country {country} has overlapping region mappings in {year}"
            ))),
            (None, _) if self.contains_country(country) => Err(Error::Domain(format!(
                "country {country} has no active region mapping in {year}"
            ))),
            (None, _) => Err(Error::Domain(format!("unknown geography {country}"))),
        }
    }
}

/// Geography code that provides the per-commodity default start month.
pub const DEFAULT_GEO: &str = "*";

/// Marketing-year start month per (commodity, geography).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeCalendar {
    pub entries: BTreeMap<(String, String), u8>,
}

impl TradeCalendar {
    pub fn insert(&mut self, commodity: &str, geo: &str, start_month: u8) {
        self.entries
            .insert((commodity.to_string(), geo.to_string()), start_month);
    }

    /// Start month for `geo`, falling back to the commodity default.
    pub fn start_month(&self, commodity: &str, geo: &str) -> Option<u8> {
        self.entries
            .get(&(commodity.to_string(), geo.to_string()))
            .or_else(|| {
                self.entries
                    .get(&(commodity.to_string(), DEFAULT_GEO.to_string()))
            })
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeKind {
    Price,
    SupplyAnnual,
    PriceLagged,
}

/// Time keys that know how to step back one year.
pub trait AnnualKey: Ord + Copy + fmt::Debug {
    fn prev_year(self) -> Self;
}

impl AnnualKey for i32 {
    fn prev_year(self) -> Self {
        self - 1
    }
}

impl AnnualKey for YearMonth {
    fn prev_year(self) -> Self {
        YearMonth::new(self.year - 1, self.month)
    }
}

/// Fractional year-over-year changes (0.49 = +49%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChangeSeries<K: Ord> {
    pub kind: ChangeKind,
    pub values: BTreeMap<K, f64>,
}

pub type MonthlyChanges = RelativeChangeSeries<YearMonth>;
pub type AnnualChanges = RelativeChangeSeries<i32>;
