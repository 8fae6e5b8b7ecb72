use std::collections::BTreeMap;

use super::*;
use crate::data_model::ChangeKind;
use crate::model_zoo::{Family, Grid, ParamValue};
use crate::rng::rng_from;
use crate::stats::relative_advantage;

fn spec(family: Family, points: &[(&str, f64)], seed: u64) -> ModelSpec {
    let grid: Grid = points
        .iter()
        .map(|(k, v)| (k.to_string(), vec![ParamValue::Num(*v)]))
        .collect();
    ModelSpec::new(family, grid, seed).unwrap()
}

/// `n` years of y = 0.8 x1 - 0.5 x2 + noise, plus a forecast row.
fn learnable_frame(n: usize, seed: u64) -> FeatureFrame {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from(seed, &[]);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x1: Vec<f64> = (0..n).map(|_| draw()).collect();
    let x2: Vec<f64> = (0..n).map(|_| draw()).collect();
    let x3: Vec<f64> = (0..n).map(|_| draw()).collect();
    let y: Vec<f64> = (0..n).map(|i| 0.8 * x1[i] - 0.5 * x2[i] + 0.2 * draw()).collect();
    FeatureFrame::from_columns(
        "screened",
        4,
        6,
        (0..n as i32).map(|i| 1960 + i).collect(),
        vec![("x1".into(), x1), ("x2".into(), x2), ("x3".into(), x3)],
        y,
        Some((1960 + n as i32, vec![0.5, -0.5, 0.0])),
    )
    .unwrap()
}

fn ar1_model(phi: f64, history: Vec<f64>) -> ArimaModel {
    ArimaModel {
        order: ArimaOrder::new(1, 0, 0),
        ar: vec![phi],
        ma: Vec::new(),
        mean: 0.0,
        sigma2: 1.0,
        loglik: 0.0,
        aic: 0.0,
        converged: true,
        history,
    }
}

fn monthly_ar1(start: YearMonth, n: usize, phi: f64, seed: u64) -> MonthlyChanges {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from(seed, &[]);
    let mut v = 0.0;
    let values: BTreeMap<YearMonth, f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v = phi * v + 0.05 * e;
            (start.add_months(i as i64), v)
        })
        .collect();
    MonthlyChanges { kind: ChangeKind::Price, values }
}

#[test]
fn rolling_record_structure() {
    let frame = learnable_frame(47, 1);
    let s = spec(Family::OlsStepwise, &[("cor_cutoff", 1.0)], 2);
    let recs = rolling_forecast(&frame, &s, 44, 3).unwrap();
    assert_eq!(recs.len(), 4);
    let years: Vec<i32> = recs.iter().map(|r| r.target_year).collect();
    assert_eq!(years, vec![2004, 2005, 2006, 2007]);
    assert!(recs[..3].iter().all(|r| r.observed.is_some()));
    assert_eq!(recs[3].observed, None);
    assert_eq!(recs.iter().map(|r| r.train_size).collect::<Vec<_>>(), vec![44, 45, 46, 47]);

    let mut no_fc = frame.clone();
    no_fc.forecast = None;
    assert_eq!(rolling_forecast(&no_fc, &s, 44, 3).unwrap().len(), 3);
    assert!(matches!(rolling_forecast(&frame, &s, 48, 3), Err(Error::Stage(_))));
}

#[test]
fn rolling_training_rows_replay() {
    let frame = learnable_frame(30, 3);
    let s = spec(Family::Cart, &[("depth", 3.0), ("min_leaf", 2.0)], 9);
    let recs = rolling_forecast(&frame, &s, 25, 3).unwrap();
    for r in &recs {
        let t = r.train_size;
        let train: Vec<usize> = (0..t).collect();
        let (x, y) = frame.subset(&train);
        let m = fit(Family::Cart, &s.points()[0], derive_seed(9, &[r.target_year as u64]), &x, &y).unwrap();
        let row = if t < frame.n_rows() {
            frame.row(t)
        } else {
            frame.forecast.as_ref().unwrap().values.clone()
        };
        assert_eq!(m.predict_row(&row), r.predicted);
    }
}

#[test]
fn rolling_learns_a_signal() {
    let frame = learnable_frame(60, 4);
    let s = spec(Family::OlsStepwise, &[("cor_cutoff", 0.9)], 2);
    let recs = rolling_forecast(&frame, &s, 40, 3).unwrap();
    let (obs, pred): (Vec<f64>, Vec<f64>) =
        recs.iter().filter_map(|r| r.observed.map(|o| (o, r.predicted))).unzip();
    assert!(relative_advantage(&obs, &pred).unwrap().unwrap() > 0.0);
}

#[test]
fn naive_examples() {
    assert!((naive_forecast(&[0.1, 0.3]).unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(naive_forecast(&[0.7; 3]).unwrap(), 0.7);
    assert!(matches!(naive_forecast(&[]), Err(Error::Contract(_))));

    let frame = learnable_frame(47, 5);
    let recs = naive_rolling(&frame, 44).unwrap();
    assert_eq!(recs.len(), 4);
    for r in &recs {
        let mut sum = 0.0;
        for v in &frame.target[..r.train_size] {
            sum += v;
        }
        assert!((r.predicted - sum / r.train_size as f64).abs() < 1e-15);
    }
    // The mean predictor has no advantage on its own training window.
    let train = &frame.target[..44];
    let m = naive_forecast(train).unwrap();
    assert_eq!(relative_advantage(train, &vec![m; train.len()]).unwrap(), Some(0.0));
}

#[test]
fn recursion_examples() {
    let mut hist = vec![0.0; 10];
    hist.push(1.0);
    let path = recursive_forecast(&ar1_model(0.5, hist), 12).unwrap();
    for (h, v) in path.iter().enumerate() {
        assert!((v - 0.5f64.powi(h as i32 + 1)).abs() < 1e-12);
    }
    assert!(recursive_forecast(&ar1_model(0.5, vec![1.0]), 0).is_err());
    assert!(recursive_forecast(&ar1_model(0.5, vec![1.0]), 14).is_err());
}

#[test]
fn recursion_one_step_is_the_direct_forecast() {
    let series: Vec<f64> = monthly_ar1(YearMonth::new(1980, 1), 200, 0.6, 7).values.into_values().collect();
    for order in [ArimaOrder::new(1, 0, 0), ArimaOrder::new(1, 0, 1), ArimaOrder::new(0, 1, 1)] {
        let m = ArimaModel::fit_lenient(&series, order).unwrap();
        let direct = m.forecast(1)[0];
        let rec = recursive_ts_forecast(&series, order, 1).unwrap();
        assert_eq!(rec[0].to_bits(), direct.to_bits());
        // Appending the prediction reproduces the multi-step recursion.
        let multi = m.forecast(5);
        let steps = recursive_forecast(&m, 5).unwrap();
        for (a, b) in multi.iter().zip(&steps) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let white = recursive_ts_forecast(&series, ArimaOrder::new(0, 0, 0), 6).unwrap();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    assert!(white.iter().all(|v| (v - mean).abs() < 1e-15));
    assert!(matches!(
        recursive_ts_forecast(&series[..149], ArimaOrder::new(1, 0, 0), 1),
        Err(Error::Contract(_))
    ));
}

#[test]
fn ts_rolling_uses_only_observable_months() {
    let series = monthly_ar1(YearMonth::new(1980, 1), 30 * 12, 0.7, 11);
    let cache = ArimaCache::new();
    let order = ArimaOrder::new(1, 0, 0);
    let targets = vec![(2005, Some(0.1)), (2006, Some(0.2)), (2010, None)];
    let recs = ts_rolling_forecast("maize", &series, order, 3, 6, &targets, &cache).unwrap();
    assert_eq!(recs.len(), 3);
    for r in &recs {
        // Issued Sep of the previous year; the last observable change is Aug.
        let end = YearMonth::new(r.target_year - 1, 8);
        let train: Vec<f64> = series.values.range(..=end).map(|(_, &v)| v).collect();
        assert_eq!(r.train_size, train.len());
        let oracle = recursive_ts_forecast(&train, order, 7).unwrap()[6];
        assert_eq!(r.predicted, oracle);
    }
    // Issued past the end of the data: train on everything, step from Dec.
    let late = ts_rolling_forecast("maize", &series, order, 3, 1, &[(2010, None)], &cache).unwrap();
    assert_eq!(late[0].train_size, series.values.len());
    let all: Vec<f64> = series.values.values().copied().collect();
    assert_eq!(late[0].predicted, recursive_ts_forecast(&all, order, 3).unwrap()[2]);
    // Too far beyond the data for the recursion.
    assert!(ts_rolling_forecast("maize", &series, order, 3, 6, &[(2011, None)], &cache).is_err());

    let early = vec![(1990, Some(0.0))];
    assert!(matches!(
        ts_rolling_forecast("maize", &series, order, 3, 6, &early, &cache),
        Err(Error::Stage(_))
    ));
}

fn rec(model: &str, year: i32, pred: f64, obs: Option<f64>) -> ForecastRecord {
    ForecastRecord {
        commodity: "maize".into(),
        target_year: year,
        target_month: 5,
        horizon: 1,
        model: model.into(),
        dataset: "screened".into(),
        predicted: pred,
        observed: obs,
        train_size: 44,
    }
}

#[test]
fn winner_examples() {
    let single = vec![rec("cart", 2000, 0.1, Some(0.2)), rec("cart", 2001, 0.1, None)];
    let best = best_model_per_cell(&score_records(&single).unwrap());
    assert_eq!(best[&(5, 1)].model, "cart");

    let mut with_perfect = single.clone();
    with_perfect.push(rec("gbm", 2000, 0.2, Some(0.2)));
    with_perfect.push(rec(NAIVE, 2000, 0.2, Some(0.2)));
    let best = best_model_per_cell(&score_records(&with_perfect).unwrap());
    assert_eq!(best[&(5, 1)].model, "gbm");
}

#[test]
fn winner_matches_sort_oracle() {
    let models = ["rf", "cart", "gbm", "ols-stepwise", "arima"];
    let errs: [[f64; 3]; 5] = [
        [0.1, 0.2, 0.3],
        [0.2, 0.2, 0.2],
        [0.3, 0.2, 0.1],
        [0.0, 0.3, 0.3],
        [0.25, 0.25, 0.1],
    ];
    let mut records = Vec::new();
    for (m, e) in models.iter().zip(errs) {
        for (i, d) in e.iter().enumerate() {
            records.push(rec(m, 2000 + i as i32, 1.0 + d, Some(1.0)));
        }
    }
    let scores = score_records(&records).unwrap();
    let winner = &best_model_per_cell(&scores)[&(5, 1)];
    let mut oracle = scores.clone();
    oracle.sort_by(|a, b| {
        (a.metrics.mae, a.metrics.rmse, &a.model)
            .partial_cmp(&(b.metrics.mae, b.metrics.rmse, &b.model))
            .unwrap()
    });
    assert_eq!(winner, &oracle[0]);
    // rf, cart and gbm tie on MAE; cart has the smallest RMSE.
    assert_eq!(winner.model, "cart");
}

#[test]
fn csv_round_trip() {
    let mut records = vec![
        rec("gbm", 2001, 0.123456789012345, Some(-0.5)),
        rec("cart", 2002, 1.0 / 3.0, None),
        rec("cart", 2001, -0.0, Some(0.25)),
    ];
    sort_records(&mut records);
    assert_eq!(records[0].model, "cart");
    assert_eq!(records[0].target_year, 2001);
    let mut buf = Vec::new();
    write_forecasts_csv(&records, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("commodity,target_year,target_month,horizon,model,dataset,predicted,observed,T\n"));
    assert!(text.contains("maize,2002,5,1,cart,screened,0.3333333333333333,,44"));
    assert_eq!(read_forecasts_csv(buf.as_slice()).unwrap(), records);
}
