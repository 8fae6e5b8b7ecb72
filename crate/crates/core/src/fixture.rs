//! Deterministic multi-decade fixture for one commodity: monthly prices
//! for the target and an energy predictor, annual country supply, a
//! region map and a trade calendar, plus a desk-scale run configuration.
//!
//! Real log prices follow a slowly mean-reverting process that also reacts
//! to world production surprises at the start of each marketing year. The
//! 2010–2011 episode is pinned: deflated April prices of 156.98 and 233.9,
//! a +49% change.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::data_model::{
    write_calendar, write_prices, write_regions, write_supply, AnnualSupplySeries, GeoMapping,
    GeographyMap, Inputs, Level, MonthlyPriceSeries, SupplyKind, TradeCalendar, DEFAULT_GEO,
};
use crate::error::Result;
use crate::rng::{rng_from, tag};
use crate::time::YearMonth;

pub const COMMODITY: &str = "maize";
pub const ENERGY: &str = "energy";
pub const FIRST_YEAR: i32 = 1970;
pub const LAST_PRICE_YEAR: i32 = 2021;
pub const LAST_SUPPLY_YEAR: i32 = 2020;
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Deflated April prices of the pinned episode.
pub const APR_2010: f64 = 156.98;
pub const APR_2011: f64 = 233.9;

pub const PRICES_CSV: &str = "prices.csv";
pub const SUPPLY_CSV: &str = "supply.csv";
pub const REGIONS_CSV: &str = "regions.csv";
pub const CALENDAR_CSV: &str = "calendar.csv";
pub const CONFIG_JSON: &str = "config.json";

/// (country, region, marketing-year start, production share, base yield t/ha)
const COUNTRIES: [(&str, &str, u8, f64, f64); 12] = [
    ("USA", "NAM", 9, 0.36, 7.0),
    ("MEX", "NAM", 9, 0.03, 2.4),
    ("BRA", "SAM", 3, 0.09, 3.1),
    ("ARG", "SAM", 3, 0.05, 4.5),
    ("CHN", "ASI", 10, 0.21, 4.2),
    ("IND", "ASI", 10, 0.03, 1.8),
    ("IDN", "ASI", 10, 0.02, 2.9),
    ("UKR", "EUR", 10, 0.04, 3.8),
    ("FRA", "EUR", 10, 0.03, 6.5),
    ("ROU", "EUR", 10, 0.02, 3.5),
    ("ZAF", "AFR", 5, 0.02, 2.6),
    ("NGA", "AFR", 10, 0.02, 1.5),
];

/// World maize production in the first year, tonnes.
const WORLD_BASE: f64 = 3.0e8;

fn index(ym: YearMonth) -> f64 {
    let t = (ym.year - 2010) as f64 + (ym.month as f64 - 1.0) / 12.0;
    100.0 * (0.032 * t).exp() * (1.0 + 0.004 * (0.5 * ym.month as f64).sin())
}

fn months() -> impl Iterator<Item = YearMonth> {
    (FIRST_YEAR..=LAST_PRICE_YEAR).flat_map(|y| (1..=12).map(move |m| YearMonth::new(y, m)))
}

/// All fixture inputs for `seed`.
pub fn generate(seed: u64) -> Inputs {
    let normal = |sd: f64| Normal::new(0.0, sd).expect("finite sd");

    // Supply: yield shocks per country and year, production = area × yield.
    let mut rng = rng_from(seed, &[tag("supply")]);
    let years: Vec<i32> = (FIRST_YEAR..=LAST_SUPPLY_YEAR).collect();
    let mut supplies = Vec::new();
    let mut world_surprise: BTreeMap<i32, f64> = BTreeMap::new();
    for &(geo, _, _, share, base_yield) in &COUNTRIES {
        let mut prod = BTreeMap::new();
        let mut yld = BTreeMap::new();
        let mut stocks = BTreeMap::new();
        let mut stock = 0.15 * share * WORLD_BASE;
        for &y in &years {
            let t = (y - FIRST_YEAR) as f64;
            let shock = normal(0.07).sample(&mut rng);
            let y_t = base_yield * (1.0 + 0.018 * t) * (1.0 + shock);
            let area = share * WORLD_BASE / base_yield * (1.0 + 0.006 * t) * (1.0 + normal(0.02).sample(&mut rng));
            let p = area * y_t;
            *world_surprise.entry(y).or_default() += share * shock;
            prod.insert(y, p);
            yld.insert(y, y_t * 1.0e4);
            stocks.insert(y, stock / 1.0e3);
            stock = (0.8 * stock + 0.2 * p * rng.random_range(0.05..0.25)).max(1.0);
        }
        for (kind, values) in [
            (SupplyKind::Production, prod),
            (SupplyKind::Yield, yld),
            (SupplyKind::Stocks, stocks),
        ] {
            supplies.push(AnnualSupplySeries {
                commodity: COMMODITY.into(),
                kind,
                geo: geo.into(),
                level: Level::Country,
                values,
            });
        }
    }

    // Real log prices: mean reversion, energy co-movement and a harvest
    // response to the world yield surprise in September.
    let mut rng = rng_from(seed, &[tag("prices")]);
    let mut maize_log = Vec::new();
    let mut energy_log = Vec::new();
    let (mut lm, mut le) = (0.0f64, 0.0f64);
    for ym in months() {
        let e_shock = normal(0.06).sample(&mut rng);
        le = 0.985 * le + e_shock;
        let mut innov = normal(0.035).sample(&mut rng) + 0.25 * e_shock;
        if ym.month == 9 {
            innov -= 2.0 * world_surprise.get(&ym.year).copied().unwrap_or(0.0);
        }
        lm = 0.975 * lm + innov;
        maize_log.push((ym, lm));
        energy_log.push((ym, le));
    }
    pin_episode(&mut maize_log);

    let series = |name: &str, level: f64, logs: &[(YearMonth, f64)], pinned: bool| {
        let mut s = MonthlyPriceSeries::new(name);
        for &(ym, l) in logs {
            let real = if pinned { l.exp() } else { level * l.exp() };
            let idx = index(ym);
            s.nominal.insert(ym, real * idx / index(YearMonth::new(2010, ym.month)));
            s.index.insert(ym, idx);
        }
        s
    };

    let mut calendar = TradeCalendar::default();
    calendar.insert(COMMODITY, DEFAULT_GEO, 9);
    for &(geo, region, start, _, _) in &COUNTRIES {
        if start != 9 {
            calendar.insert(COMMODITY, geo, start);
        }
        calendar.insert(COMMODITY, region, if region == "SAM" || region == "AFR" { 4 } else { 10 });
    }
    let map = GeographyMap::new(
        COUNTRIES
            .iter()
            .map(|&(country, region, ..)| GeoMapping {
                country: country.into(),
                region: region.into(),
                valid_from: 1900,
                valid_to: 2100,
            })
            .collect(),
    );
    Inputs {
        prices: vec![
            series(COMMODITY, 0.0, &maize_log, true),
            series(ENERGY, 65.0, &energy_log, false),
        ],
        supplies,
        map,
        calendar,
    }
}

/// Turn relative log levels into absolute real log prices that pass
/// through the pinned April 2010 and April 2011 values. The path is
/// shifted up to April 2010, tilted linearly over the following year, and
/// shifted again afterwards, so no single month jumps.
fn pin_episode(logs: &mut [(YearMonth, f64)]) {
    let at = |ym: YearMonth| logs.iter().position(|(k, _)| *k == ym).expect("month in range");
    let i0 = at(YearMonth::new(2010, 4));
    let i1 = at(YearMonth::new(2011, 4));
    let level = 5.05;
    let a = APR_2010.ln() - (level + logs[i0].1);
    let b = APR_2011.ln() - (level + logs[i1].1) - a;
    for (i, (_, l)) in logs.iter_mut().enumerate() {
        let tilt = if i <= i0 {
            0.0
        } else if i >= i1 {
            b
        } else {
            b * (i - i0) as f64 / (i1 - i0) as f64
        };
        *l += level + a + tilt;
    }
    // exact endpoints, independent of the additions above
    logs[i0].1 = APR_2010.ln();
    logs[i1].1 = APR_2011.ln();
}

/// Desk-scale configuration: every month, horizons 1, 6 and 12, small
/// hyperparameter grids.
pub fn desk_config(seed: u64) -> serde_json::Value {
    json!({
        "commodity": COMMODITY,
        "inputs": {
            "prices": PRICES_CSV,
            "supply": SUPPLY_CSV,
            "regions": REGIONS_CSV,
            "calendar": CALENDAR_CSV
        },
        "output_dir": "out",
        "months": (1..=12).collect::<Vec<u8>>(),
        "horizons": [1, 6, 12],
        "seed": seed,
        "assembly": { "monthly_predictors": [ENERGY] },
        "models": {
            "rf": { "ntree": [40], "mtry": ["third"], "min_leaf": [3] },
            "cart": { "depth": [2, 4], "min_leaf": [3] },
            "gbm": { "depth": [2], "shrinkage": [0.1], "rounds": [60], "min_leaf": [3] },
            "ols-stepwise": { "cor_cutoff": [0.9] }
        },
        "screening": { "inner_folds": 3 },
        "forecasting": { "inner_folds": 3, "arima": { "max_p": 2, "max_q": 2 } },
        "explain": {
            "background_max": 15,
            "permutations": 40,
            "exact_max": 8,
            "importance_repeats": 5,
            "pdp_bins": 8
        }
    })
}

/// Write the fixture CSVs and `config.json` into `dir`; returns the config
/// path.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let inputs = generate(seed);
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    write_prices(create(PRICES_CSV)?, &inputs.prices)?;
    write_supply(create(SUPPLY_CSV)?, &inputs.supplies)?;
    write_regions(create(REGIONS_CSV)?, &inputs.map)?;
    write_calendar(create(CALENDAR_CSV)?, &inputs.calendar)?;
    let cfg = dir.join(CONFIG_JSON);
    let mut text = serde_json::to_string_pretty(&desk_config(seed))?;
    text.push('\n');
    std::fs::write(&cfg, text)?;
    Ok(cfg)
}
