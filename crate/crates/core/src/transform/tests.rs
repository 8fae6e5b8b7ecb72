use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::data_model::{Level, SupplyKind};
use crate::testutil::synthetic_inputs;

fn series_with(points: &[((i32, u8), f64, f64)]) -> MonthlyPriceSeries {
    let mut s = MonthlyPriceSeries::new("x");
    for &((y, m), nominal, index) in points {
        s.nominal.insert(YearMonth::new(y, m), nominal);
        s.index.insert(YearMonth::new(y, m), index);
    }
    s
}

#[test]
fn deflation_arithmetic() {
    let s = series_with(&[((2010, 4), 80.0, 100.0), ((2015, 4), 150.0, 120.0)]);
    let d = deflate(&s).unwrap();
    assert_eq!(d.deflated[&YearMonth::new(2015, 4)], 125.0);
    assert_eq!(d.deflated[&YearMonth::new(2010, 4)], 80.0);
}

#[test]
fn deflation_falls_back_to_base_year_mean() {
    let s = series_with(&[((2010, 1), 1.0, 90.0), ((2010, 2), 1.0, 110.0), ((2012, 7), 50.0, 125.0)]);
    let d = deflate(&s).unwrap();
    assert!((d.deflated[&YearMonth::new(2012, 7)] - 40.0).abs() < 1e-12);
}

#[test]
fn deflation_errors() {
    let no_base = series_with(&[((2011, 1), 10.0, 100.0)]);
    assert!(matches!(deflate(&no_base), Err(Error::Config(_))));
    let bad = series_with(&[((2010, 1), 10.0, 100.0), ((2011, 1), 10.0, 0.0)]);
    assert!(matches!(deflate(&bad), Err(Error::Domain(_))));
}

#[test]
fn deflation_matches_row_oracle() {
    let inputs = synthetic_inputs(3, 5);
    let s = inputs.price_series("maize").unwrap();
    let d = deflate(s).unwrap();
    assert_eq!(d.deflated.len(), s.nominal.len());
    for (k, v) in &d.deflated {
        let base = s.index[&YearMonth::new(2010, k.month)];
        let want = s.nominal[k] * base / s.index[k];
        assert!((v - want).abs() <= 1e-12 * want.abs());
    }
}

#[test]
fn relative_change_examples() {
    let v = BTreeMap::from([(2019, 200.0), (2020, 250.0)]);
    let c = annual_relative_change(&v, ChangeKind::SupplyAnnual);
    assert_eq!(c.values, BTreeMap::from([(2020, 0.25)]));

    let flat = BTreeMap::from([(2000, 3.0), (2001, 3.0), (2002, 3.0)]);
    assert!(annual_relative_change(&flat, ChangeKind::SupplyAnnual)
        .values
        .values()
        .all(|&x| x == 0.0));

    let spike = BTreeMap::from([(YearMonth::new(2010, 4), 156.98), (YearMonth::new(2011, 4), 233.9)]);
    let c = annual_relative_change(&spike, ChangeKind::Price);
    let oracle: f64 = 233.9 / 156.98 - 1.0;
    assert_eq!(c.values[&YearMonth::new(2011, 4)], (233.9 - 156.98) / 156.98);
    assert!((oracle - 0.49).abs() < 5e-4);
}

#[test]
fn relative_change_skips_zero_base() {
    let v = BTreeMap::from([(2000, 0.0), (2001, 5.0), (2002, 10.0)]);
    let c = annual_relative_change(&v, ChangeKind::SupplyAnnual);
    assert_eq!(c.values, BTreeMap::from([(2002, 1.0)]));
}

proptest! {
    #[test]
    fn deflation_is_scale_equivariant(c in 0.01f64..100.0, seed in 0u64..50) {
        let s = synthetic_inputs(1, seed).prices[0].clone();
        let mut scaled = s.clone();
        for v in scaled.nominal.values_mut() { *v *= c; }
        let a = deflate(&s).unwrap();
        let b = deflate(&scaled).unwrap();
        for (k, v) in &a.deflated {
            prop_assert!((b.deflated[k] - c * v).abs() <= 1e-12 * (c * v).abs());
        }
    }

    #[test]
    fn relative_change_is_scale_invariant(
        values in prop::collection::vec(0.1f64..1000.0, 2..20),
        c in 0.001f64..1000.0,
    ) {
        let a: BTreeMap<i32, f64> = values.iter().enumerate().map(|(i, &v)| (2000 + i as i32, v)).collect();
        let b: BTreeMap<i32, f64> = a.iter().map(|(&k, &v)| (k, v * c)).collect();
        let ca = annual_relative_change(&a, ChangeKind::SupplyAnnual);
        let cb = annual_relative_change(&b, ChangeKind::SupplyAnnual);
        prop_assert_eq!(ca.values.len(), cb.values.len());
        for (k, v) in &ca.values {
            prop_assert!((cb.values[k] - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn supply_selection_matches_month_scan(start in 1u8..=12, y in 1992i32..2020, m in 1u8..=12) {
        let changes = AnnualChanges {
            kind: ChangeKind::SupplyAnnual,
            values: (1990..2021).map(|y| (y, y as f64)).collect(),
        };
        let issue = YearMonth::new(y, m);
        let cell = supply_cell(&changes, issue, start).unwrap();
        // oracle: walk back month by month to the latest marketing-year start
        let mut t = issue;
        while t.month != start { t = t.sub_months(1); }
        prop_assert_eq!(cell.value, t.year as f64);
        prop_assert!(cell.observed_at <= issue);
    }
}

#[test]
fn issuance_and_lag_calendar() {
    assert_eq!(issuance(2020, 9, 12), YearMonth::new(2019, 9));
    assert_eq!(issuance(2020, 3, 5), YearMonth::new(2019, 10));
    let changes = MonthlyChanges {
        kind: ChangeKind::Price,
        values: (0..48).map(|i| (YearMonth::new(2017, 1).add_months(i), i as f64)).collect(),
    };
    let cols = lag_price_features("maize", &changes, 9, 12, &[1], &[2020]).unwrap();
    assert_eq!(cols[0].0, "maize_lag1");
    let cell = cols[0].1[0].unwrap();
    assert_eq!(cell.value, changes.values[&YearMonth::new(2019, 8)]);
    assert!(cell.observed_at <= issuance(2020, 9, 12));
}

#[test]
fn lag_zero_and_out_of_range_rejected() {
    let changes = MonthlyChanges {
        kind: ChangeKind::Price,
        values: BTreeMap::new(),
    };
    assert!(matches!(lag_price_features("p", &changes, 1, 1, &[0], &[2000]), Err(Error::Contract(_))));
    assert!(lag_price_features("p", &changes, 1, 1, &[13], &[2000]).is_err());
    assert!(lag_price_features("p", &changes, 13, 1, &[1], &[2000]).is_err());
    // outside coverage: missing cell rather than an error
    let cols = lag_price_features("p", &changes, 1, 1, &[1], &[2000]).unwrap();
    assert!(cols[0].1[0].is_none());
}

#[test]
fn marketing_year_examples() {
    let changes = AnnualChanges {
        kind: ChangeKind::SupplyAnnual,
        values: BTreeMap::from([(2019, 0.1), (2020, 0.2)]),
    };
    let sep = supply_cell(&changes, YearMonth::new(2020, 9), 9).unwrap();
    assert_eq!(sep.value, 0.2);
    let aug = supply_cell(&changes, YearMonth::new(2020, 8), 9).unwrap();
    assert_eq!(aug.value, 0.1);
    assert!(supply_cell(&changes, YearMonth::new(2019, 8), 9).is_none());
    let col = align_trade_year(&changes, 9, 9, 1, &[2020, 2021]).unwrap();
    assert_eq!(col[0].unwrap().value, 0.1); // issuance Aug 2020
    assert_eq!(col[1].unwrap().value, 0.2);
}

fn country(geo: &str, total: f64) -> crate::data_model::AnnualSupplySeries {
    crate::data_model::AnnualSupplySeries {
        commodity: "maize".into(),
        kind: SupplyKind::Production,
        geo: geo.into(),
        level: Level::Country,
        values: BTreeMap::from([(2000, total)]),
    }
}

#[test]
fn top_country_examples() {
    let three = vec![country("A", 1.0), country("B", 2.0), country("C", 3.0)];
    assert_eq!(select_top_countries(&three, 21).unwrap().len(), 3);
    let two = vec![country("B", 5.0), country("A", 10.0)];
    let top = select_top_countries(&two, 1).unwrap();
    assert_eq!(top[0].geo, "A");
    let tie = vec![country("Z", 5.0), country("M", 5.0)];
    assert_eq!(select_top_countries(&tie, 1).unwrap()[0].geo, "M");
    assert!(select_top_countries(&two, 0).is_err());
}

#[test]
fn top_countries_match_sort_oracle() {
    let inputs = synthetic_inputs(30, 9);
    let prod: Vec<_> = inputs
        .supplies
        .iter()
        .filter(|s| s.kind == SupplyKind::Production)
        .cloned()
        .collect();
    let got: Vec<String> = select_top_countries(&prod, 21).unwrap().into_iter().map(|s| s.geo).collect();
    let mut oracle: Vec<(f64, String)> = prod.iter().map(|s| (s.values.values().sum(), s.geo.clone())).collect();
    oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let want: Vec<String> = oracle.into_iter().take(21).map(|x| x.1).collect();
    assert_eq!(got, want);
}

fn prepared(n: usize, seed: u64) -> PreparedInputs {
    let inputs = synthetic_inputs(n, seed);
    let opts = AssemblyOptions {
        monthly_predictors: vec!["energy".into()],
        ..AssemblyOptions::default()
    };
    PreparedInputs::new(&inputs, "maize", &opts).unwrap()
}

#[test]
fn datasets_have_expected_structure() {
    let prep = prepared(10, 1);
    let frames = assemble_datasets(&prep, 6, 3).unwrap();
    let names: Vec<&str> = frames.iter().map(|f| f.dataset.as_str()).collect();
    assert_eq!(names, ["R-P", "R-Y", "L-P", "L-Y"]);
    let rp = &frames[0];
    let count = |prefix: &str| rp.columns.iter().filter(|c| c.name.starts_with(prefix)).count();
    assert_eq!(count("production_region_"), 5);
    assert!(count("stocks_region_") <= 5);
    assert_eq!(count("maize_lag") + count("energy_lag"), 10);
    let ly = &frames[3];
    assert_eq!(ly.columns.iter().filter(|c| c.name.starts_with("yield_country_")).count(), 10);
}

#[test]
fn caps_limit_columns() {
    let inputs = synthetic_inputs(30, 2);
    let opts = AssemblyOptions {
        local_cap: 4,
        regional_supply_cap: 2,
        regional_stocks_cap: 1,
        ..AssemblyOptions::default()
    };
    let prep = PreparedInputs::new(&inputs, "maize", &opts).unwrap();
    let kinds = |id: DatasetId, p: &str| prep.datasets[&id].iter().filter(|s| s.name().starts_with(p)).count();
    assert_eq!(kinds(DatasetId::LocalProduction, "production_country_"), 4);
    assert_eq!(kinds(DatasetId::LocalProduction, "stocks_country_"), 4);
    assert_eq!(kinds(DatasetId::RegionalYield, "yield_region_"), 2);
    assert_eq!(kinds(DatasetId::RegionalYield, "stocks_region_"), 1);
}

#[test]
fn every_frame_respects_the_information_cutoff() {
    let prep = prepared(8, 3);
    for m in 1..=12u8 {
        for h in 1..=12u8 {
            for f in assemble_datasets(&prep, m, h).unwrap() {
                assert!(f.cutoff_violations().is_empty(), "m={m} h={h} {}", f.dataset);
                for c in &f.columns {
                    for (r, obs) in c.observed_at.iter().enumerate() {
                        assert!(*obs <= f.issuance[r]);
                    }
                }
            }
        }
    }
}

#[test]
fn row_count_matches_counting_oracle() {
    let prep = prepared(6, 4);
    let (m, h) = (2u8, 11u8);
    let sources = prep.datasets[&DatasetId::LocalProduction].clone();
    let frame = build_frame(&prep, "L-P", &sources, m, h).unwrap();
    let target_years: Vec<i32> = prep.target.values.keys().filter(|k| k.month == m).map(|k| k.year).collect();
    let complete = target_years
        .iter()
        .filter(|&&y| {
            let issue = issuance(y, m, h);
            sources.iter().all(|s| {
                build_column(&prep, s, &[issue], None).unwrap().0[0].is_some()
            })
        })
        .count();
    assert_eq!(frame.n_rows(), complete);
    assert_eq!(frame.n_rows() + frame.dropped_rows.len(), target_years.len());
    for c in &frame.columns {
        assert!(c.values.iter().any(|&v| v != c.values[0]));
    }
}

#[test]
fn forecast_row_is_the_year_after_the_last_target() {
    let prep = prepared(6, 5);
    let f = assemble_datasets(&prep, 3, 1).unwrap().remove(0);
    let last = *f.years.last().unwrap();
    let fr = f.forecast.as_ref().expect("forecast row");
    assert_eq!(fr.year, last + 1);
    assert_eq!(fr.values.len(), f.columns.len());
    assert!(fr.observed_at.iter().all(|&o| o <= fr.issuance));
}

#[test]
fn dropping_a_raw_year_leaves_other_rows_unchanged() {
    let inputs = synthetic_inputs(6, 6);
    let opts = AssemblyOptions::default();
    let full = PreparedInputs::new(&inputs, "maize", &opts).unwrap();
    let mut cut = inputs.clone();
    for s in cut.supplies.iter_mut().filter(|s| s.geo == "C03") {
        s.values.remove(&2005);
    }
    let reduced = PreparedInputs::new(&cut, "maize", &opts).unwrap();
    let sources = full.datasets[&DatasetId::LocalProduction].clone();
    let a = build_frame(&full, "L-P", &sources, 7, 4).unwrap();
    let b = build_frame(&reduced, "L-P", &sources, 7, 4).unwrap();
    assert!(b.n_rows() < a.n_rows());
    for (rb, &y) in b.years.iter().enumerate() {
        let ra = a.years.iter().position(|&v| v == y).unwrap();
        for cb in &b.columns {
            let ca = a.column(&cb.name).unwrap();
            assert_eq!(ca.values[ra], cb.values[rb], "{} {y}", cb.name);
        }
    }
}

#[test]
fn frame_round_trips_through_files() {
    let prep = prepared(5, 7);
    let f = assemble_datasets(&prep, 10, 6).unwrap().remove(1);
    let mut csv = Vec::new();
    let mut meta = Vec::new();
    f.write_long_csv(&mut csv).unwrap();
    f.write_metadata(&mut meta).unwrap();
    let back = FeatureFrame::read(csv.as_slice(), meta.as_slice()).unwrap();
    assert_eq!(back, f);
}

#[test]
fn empty_frame_is_a_stage_error() {
    let prep = prepared(3, 8);
    let impossible = vec![ColumnSource::PriceLag {
        series: "maize".into(),
        lag: 12,
    }];
    // month 1 with horizon 12 and lag 12 reaches two years back: still fine
    assert!(build_frame(&prep, "x", &impossible, 1, 12).is_ok());
    let unknown = vec![ColumnSource::Supply {
        kind: SupplyKind::Stocks,
        level: Level::Country,
        geo: "NOPE".into(),
    }];
    assert!(build_frame(&prep, "x", &unknown, 1, 1).is_err());
}
