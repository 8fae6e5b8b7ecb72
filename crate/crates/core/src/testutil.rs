//! Small synthetic inputs shared by unit tests.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::data_model::{
    AnnualSupplySeries, GeoMapping, GeographyMap, Inputs, Level, MonthlyPriceSeries, SupplyKind,
    TradeCalendar, DEFAULT_GEO,
};
use crate::rng::rng_from;
use crate::time::YearMonth;

pub const FIRST_YEAR: i32 = 1990;
pub const LAST_YEAR: i32 = 2021;

fn price_series(name: &str, seed: u64, level: f64) -> MonthlyPriceSeries {
    let mut rng = rng_from(seed, &[]);
    let mut s = MonthlyPriceSeries::new(name);
    let mut log_p: f64 = 0.0;
    for y in FIRST_YEAR..=LAST_YEAR {
        for m in 1..=12u8 {
            log_p = 0.9 * log_p + rng.random_range(-0.08..0.08);
            let key = YearMonth::new(y, m);
            let index = 100.0 * 1.02f64.powi(y - 2010) * (1.0 + 0.001 * m as f64);
            s.nominal.insert(key, level * log_p.exp() * index / 100.0);
            s.index.insert(key, index);
        }
    }
    s
}

/// Monthly `maize` and `energy` series plus annual supply for
/// `n_countries` countries spread over five regions. Country `C00` has a
/// March marketing-year start; everything else uses the September default.
pub fn synthetic_inputs(n_countries: usize, seed: u64) -> Inputs {
    let mut rng = rng_from(seed, &[1]);
    let mut supplies = Vec::new();
    let mut entries = Vec::new();
    for i in 0..n_countries {
        let geo = format!("C{i:02}");
        entries.push(GeoMapping {
            country: geo.clone(),
            region: format!("R{}", i % 5),
            valid_from: 1900,
            valid_to: 2100,
        });
        for (kind, base) in [
            (SupplyKind::Production, 1000.0 * (i + 1) as f64),
            (SupplyKind::Yield, 3.0 + i as f64 * 0.1),
            (SupplyKind::Stocks, 300.0 * (i + 1) as f64),
        ] {
            let values: BTreeMap<i32, f64> = (FIRST_YEAR..=LAST_YEAR - 1)
                .map(|y| (y, base * (1.0 + rng.random_range(-0.2..0.2))))
                .collect();
            supplies.push(AnnualSupplySeries {
                commodity: "maize".into(),
                kind,
                geo: geo.clone(),
                level: Level::Country,
                values,
            });
        }
    }
    let mut calendar = TradeCalendar::default();
    calendar.insert("maize", DEFAULT_GEO, 9);
    calendar.insert("maize", "C00", 3);
    Inputs {
        prices: vec![price_series("maize", seed, 150.0), price_series("energy", seed + 1, 60.0)],
        supplies,
        map: GeographyMap::new(entries),
        calendar,
    }
}
