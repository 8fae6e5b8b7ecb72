use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AnnualSupplySeries, GeographyMap, Level, MonthlyPriceSeries, TradeCalendar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// Blocks the pipeline.
    Hard,
    /// Recorded only (coverage gaps and similar).
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn hard(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            severity: Severity::Hard,
            location: location.into(),
            message: message.into(),
        });
    }

    fn soft(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            severity: Severity::Soft,
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Hard)
    }

    pub fn has_hard(&self) -> bool {
        self.hard_violations().next().is_some()
    }

    /// `Err` when any hard violation is present.
    pub fn into_result(self) -> Result<Self> {
        let hard = self.hard_violations().count();
        if hard == 0 {
            return Ok(self);
        }
        let first = self.hard_violations().next().map(|v| v.to_string()).unwrap_or_default();
        Err(Error::Validation { hard, first })
    }
}

/// Check every cross-file invariant of the inputs.
pub fn validate_dataset(
    prices: &[MonthlyPriceSeries],
    supplies: &[AnnualSupplySeries],
    map: &GeographyMap,
    cal: &TradeCalendar,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    for series in prices {
        for (key, &v) in &series.nominal {
            if v <= 0.0 {
                report.hard(format!("prices[{}, {key}]", series.commodity), "non-positive price");
            }
        }
        for (key, &v) in &series.index {
            if v <= 0.0 {
                report.hard(
                    format!("prices[{}, {key}]", series.commodity),
                    "non-positive price index",
                );
            }
        }
        for key in series.gaps() {
            report.soft(format!("prices[{}, {key}]", series.commodity), "coverage gap");
        }
    }

    check_map(map, &mut report);
    let regions = map.regions();

    let mut supply_geos: BTreeSet<(String, String)> = BTreeSet::new();
    for s in supplies {
        let loc = |year: i32| format!("supply[{}, {}, {}, {year}]", s.commodity, s.kind, s.geo);
        for (&year, &v) in &s.values {
            if !(v >= 0.0) {
                report.hard(loc(year), "negative quantity");
            }
        }
        match s.level {
            Level::Country => {
                if !map.contains_country(&s.geo) {
                    report.hard(
                        format!("supply[{}, {}]", s.commodity, s.geo),
                        format!("unknown geography {}", s.geo),
                    );
                } else {
                    for &year in s.values.keys() {
                        if let Err(e) = map.resolve(&s.geo, year) {
                            report.hard(loc(year), e.to_string());
                        }
                    }
                }
            }
            Level::Region => {
                if !regions.contains(s.geo.as_str()) {
                    report.hard(
                        format!("supply[{}, {}]", s.commodity, s.geo),
                        format!("unknown region {}", s.geo),
                    );
                }
            }
        }
        supply_geos.insert((s.commodity.clone(), s.geo.clone()));
        if s.level == Level::Country {
            // aggregated regions need a calendar entry too
            for &year in s.values.keys() {
                if let Ok(region) = map.resolve(&s.geo, year) {
                    supply_geos.insert((s.commodity.clone(), region.to_string()));
                }
            }
        }
    }

    for (commodity, geo) in &supply_geos {
        if cal.start_month(commodity, geo).is_none() {
            report.hard(
                format!("calendar[{commodity}, {geo}]"),
                "missing calendar entry and no commodity default",
            );
        }
    }
    for ((commodity, geo), &m) in &cal.entries {
        if !(1..=12).contains(&m) {
            report.hard(format!("calendar[{commodity}, {geo}]"), format!("month {m} outside 1..12"));
        }
    }
    report
}

fn check_map(map: &GeographyMap, report: &mut ValidationReport) {
    let mut by_country: BTreeMap<&str, Vec<(i32, i32)>> = BTreeMap::new();
    for e in &map.entries {
        if e.valid_from > e.valid_to {
            report.hard(
                format!("regions[{}]", e.country),
                format!("valid_from {} after valid_to {}", e.valid_from, e.valid_to),
            );
        }
        by_country
            .entry(&e.country)
            .or_default()
            .push((e.valid_from, e.valid_to));
    }
    for (country, mut spans) in by_country {
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 <= w[0].1 {
                report.hard(
                    format!("regions[{country}]"),
                    format!("overlapping mappings {:?} and {:?}", w[0], w[1]),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{GeoMapping, SupplyKind};
    use crate::time::YearMonth;

    fn fixture() -> (Vec<MonthlyPriceSeries>, Vec<AnnualSupplySeries>, GeographyMap, TradeCalendar) {
        let mut p = MonthlyPriceSeries::new("maize");
        for m in 1..=12 {
            p.nominal.insert(YearMonth::new(2001, m), 100.0 + m as f64);
            p.index.insert(YearMonth::new(2001, m), 90.0);
        }
        let s = AnnualSupplySeries {
            commodity: "maize".into(),
            kind: SupplyKind::Production,
            geo: "US".into(),
            level: Level::Country,
            values: [(2000, 10.0), (2001, 12.0)].into_iter().collect(),
        };
        let map = GeographyMap::new(vec![GeoMapping {
            country: "US".into(),
            region: "NA".into(),
            valid_from: 1900,
            valid_to: 2100,
        }]);
        let mut cal = TradeCalendar::default();
        cal.insert("maize", "*", 9);
        (vec![p], vec![s], map, cal)
    }

    #[test]
    fn well_formed_fixture_has_empty_report() {
        let (p, s, m, c) = fixture();
        assert!(validate_dataset(&p, &s, &m, &c).is_empty());
    }

    #[test]
    fn negative_price_is_hard() {
        let (mut p, s, m, c) = fixture();
        p[0].nominal.insert(YearMonth::new(2001, 3), -5.0);
        let r = validate_dataset(&p, &s, &m, &c);
        let hard: Vec<_> = r.hard_violations().collect();
        assert_eq!(hard.len(), 1);
        assert_eq!(hard[0].message, "non-positive price");
        assert!(hard[0].location.contains("2001-03"));
        assert!(r.into_result().is_err());
    }

    #[test]
    fn unknown_country_is_hard_and_named() {
        let (p, mut s, m, c) = fixture();
        s[0].geo = "ZZ".into();
        let r = validate_dataset(&p, &s, &m, &c);
        assert!(r.hard_violations().any(|v| v.message.contains("ZZ")));
    }

    #[test]
    fn missing_calendar_is_hard() {
        let (p, s, m, _) = fixture();
        let mut cal = TradeCalendar::default();
        cal.insert("maize", "US", 9);
        let r = validate_dataset(&p, &s, &m, &cal);
        // the NA region aggregate has no entry and no default
        assert!(r.hard_violations().any(|v| v.location.contains("NA")));
    }

    #[test]
    fn gaps_are_soft() {
        let (mut p, s, m, c) = fixture();
        p[0].nominal.remove(&YearMonth::new(2001, 6));
        let r = validate_dataset(&p, &s, &m, &c);
        assert!(!r.has_hard());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].message, "coverage gap");
    }

    #[test]
    fn overlapping_map_entries_are_hard() {
        let (p, s, mut m, c) = fixture();
        m.entries.push(GeoMapping {
            country: "US".into(),
            region: "XX".into(),
            valid_from: 2000,
            valid_to: 2001,
        });
        assert!(validate_dataset(&p, &s, &m, &c).has_hard());
    }
}
