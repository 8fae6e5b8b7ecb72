use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::model_zoo::{Grid, ParamValue};
use crate::rng::rng_from;

fn spec(family: Family, points: &[(&str, f64)], seed: u64) -> ModelSpec {
    let grid: Grid = points
        .iter()
        .map(|(k, v)| (k.to_string(), vec![ParamValue::Num(*v)]))
        .collect();
    ModelSpec::new(family, grid, seed).unwrap()
}

fn imp(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn score(model: Family, dataset: &str, mae: f64, mad: f64, rmse: f64) -> OptionScore {
    OptionScore {
        model,
        dataset: dataset.into(),
        metrics: MetricsRow { mae, mad, mape: None, mse: rmse * rmse, rmse, ra: None, n: 10 },
        error_sum: mae + mad + rmse,
        failures: 0,
    }
}

/// Frame with `k` features over `n` years; the first `signal` columns drive
/// the target, the rest are noise.
fn synthetic_frame(dataset: &str, n: usize, k: usize, signal: usize, seed: u64) -> FeatureFrame {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from(seed, &[tag(dataset)]);
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let target: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = (0..signal).map(|j| (j + 1) as f64 * cols[j][i]).sum();
            let e: f64 = StandardNormal.sample(&mut rng);
            s + 0.1 * e
        })
        .collect();
    FeatureFrame::from_columns(
        dataset,
        6,
        1,
        (0..n as i32).map(|i| 1980 + i).collect(),
        cols.into_iter().enumerate().map(|(j, c)| (format!("f{j:02}"), c)).collect(),
        target,
        None,
    )
    .unwrap()
}

#[test]
fn weight_examples() {
    assert_eq!(model_weights(1.0, 3.0).unwrap(), (0.75, 0.25));
    assert_eq!(model_weights(2.0, 2.0).unwrap(), (0.5, 0.5));
    assert_eq!(model_weights(0.0, 5.0).unwrap(), (1.0, 0.0));
    assert_eq!(model_weights(0.0, 0.0).unwrap(), (0.5, 0.5));
    assert!(matches!(model_weights(-1.0, 2.0), Err(Error::Contract(_))));
    assert!(model_weights(f64::NAN, 2.0).is_err());
}

#[test]
fn min_max_examples() {
    let s = min_max_scale(&imp(&[("a", 2.0), ("b", 4.0), ("c", 6.0)]));
    assert_eq!(s, imp(&[("a", 0.0), ("b", 0.5), ("c", 1.0)]));
    let flat = min_max_scale(&imp(&[("a", 3.0), ("b", 3.0)]));
    assert!(flat.values().all(|&v| v == 0.0));
    let dirty = min_max_scale(&imp(&[("a", -1.0), ("b", f64::INFINITY), ("c", 4.0)]));
    assert_eq!(dirty, imp(&[("a", 0.0), ("b", 0.0), ("c", 1.0)]));
}

#[test]
fn aggregate_single_iteration() {
    let it = vec![imp(&[("a", 2.0), ("b", 4.0), ("c", 6.0)])];
    let features: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let out = aggregate_importance(&[(&it, 1.0)], &features);
    assert_eq!(out, imp(&[("a", 0.0), ("b", 0.5), ("c", 1.0)]));
}

#[test]
fn aggregate_matches_step_by_step_oracle() {
    // Option 1 sees {a, b, c}; option 2 sees {b, c, d}.
    let o1 = vec![
        imp(&[("a", 1.0), ("b", 5.0), ("c", 3.0)]),
        imp(&[("a", -2.0), ("b", 8.0), ("c", 4.0)]),
        imp(&[("a", 0.5), ("b", 0.5), ("c", 0.5)]),
    ];
    let o2 = vec![
        imp(&[("b", 10.0), ("c", 0.0), ("d", 5.0)]),
        imp(&[("b", 1.0), ("c", 3.0), ("d", f64::NAN)]),
    ];
    let (w1, w2) = model_weights(2.0, 6.0).unwrap();
    let features: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let out = aggregate_importance(&[(&o1, w1), (&o2, w2)], &features);

    // Hand-scaled iterations, each row (a, b, c, d).
    let scaled = [
        ([0.0, 1.0, 0.5, 0.0], w1),
        ([0.0, 1.0, 0.5, 0.0], w1),
        ([0.0, 0.0, 0.0, 0.0], w1),
        ([0.0, 1.0, 0.0, 0.5], w2),
        ([0.0, 1.0 / 3.0, 1.0, 0.0], w2),
    ];
    for (j, name) in ["a", "b", "c", "d"].iter().enumerate() {
        let oracle: f64 = scaled.iter().map(|(row, w)| row[j] * w).sum::<f64>() / 5.0;
        assert!((out[*name] - oracle).abs() < 1e-12, "{name}: {} vs {oracle}", out[*name]);
        assert!((0.0..=1.0).contains(&out[*name]));
    }
}

proptest! {
    #[test]
    fn aggregate_is_scale_invariant_per_iteration(
        raw in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 1..5),
        which in 0usize..5,
        c in 0.01f64..100.0,
    ) {
        let names = ["a", "b", "c", "d"];
        let its: Vec<BTreeMap<String, f64>> = raw
            .iter()
            .map(|v| names.iter().map(|n| n.to_string()).zip(v.iter().copied()).collect())
            .collect();
        let mut scaled = its.clone();
        let k = which % scaled.len();
        scaled[k].values_mut().for_each(|v| *v *= c);
        let features: BTreeSet<String> = names.iter().map(|s| s.to_string()).collect();
        let a = aggregate_importance(&[(&its, 0.7)], &features);
        let b = aggregate_importance(&[(&scaled, 0.7)], &features);
        for n in names {
            prop_assert!((a[n] - b[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_a_convex_pair(e1 in 0.0f64..1e6, e2 in 0.0f64..1e6) {
        let (w1, w2) = model_weights(e1, e2).unwrap();
        prop_assert!((w1 + w2 - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&w1) && (0.0..=1.0).contains(&w2));
        if e1 < e2 {
            prop_assert!(w1 > w2);
        }
    }
}

#[test]
fn retain_examples() {
    let ten: BTreeMap<String, f64> = (0..10).map(|i| (format!("x{i}"), i as f64)).collect();
    assert_eq!(retain_top(&ten, 19).unwrap().len(), 10);
    let many: BTreeMap<String, f64> = (0..25).map(|i| (format!("x{i:02}"), i as f64)).collect();
    let kept = retain_top(&many, 19).unwrap();
    assert_eq!(kept.len(), 19);
    assert_eq!(kept[0], "x24");
    assert_eq!(kept[18], "x06");
    // Tie at the cut: the smaller name wins.
    let tie = imp(&[("b", 0.5), ("a", 0.5), ("c", 0.9)]);
    assert_eq!(retain_top(&tie, 2).unwrap(), vec!["c", "a"]);
    assert!(retain_top(&tie, 0).is_err());
}

#[test]
fn select_examples() {
    let two = vec![
        score(Family::Cart, "R-P", 1.0, 1.0, 1.0),
        score(Family::Gbm, "R-P", 2.0, 2.0, 2.0),
    ];
    assert_eq!(select_top_two(&two).unwrap(), (0, 1));
    let with_zero = vec![
        score(Family::Cart, "R-P", 1.0, 1.0, 1.0),
        score(Family::Gbm, "R-P", 2.0, 2.0, 2.0),
        score(Family::OlsStepwise, "L-Y", 0.0, 0.0, 0.0),
    ];
    assert_eq!(select_top_two(&with_zero).unwrap(), (2, 0));
    assert!(select_top_two(&two[..1]).is_err());
}

#[test]
fn select_matches_full_sort_oracle() {
    let families = [Family::Cart, Family::RandomForest, Family::Gbm, Family::OlsStepwise];
    let mut opts = Vec::new();
    for (i, f) in families.iter().enumerate() {
        for (j, d) in ["L-P", "R-Y"].iter().enumerate() {
            // Several equal error sums to exercise the tie-breaks.
            let mae = [0.3, 0.2][j];
            let mad = 0.5 - mae;
            opts.push(score(*f, d, mae, mad, 0.1 * (i % 2) as f64));
        }
    }
    let (a, b) = select_top_two(&opts).unwrap();
    let mut oracle: Vec<&OptionScore> = opts.iter().collect();
    oracle.sort_by(|x, y| {
        (x.error_sum, x.metrics.mae, x.model.as_str(), &x.dataset)
            .partial_cmp(&(y.error_sum, y.metrics.mae, y.model.as_str(), &y.dataset))
            .unwrap()
    });
    assert_eq!(&opts[a], oracle[0]);
    assert_eq!(&opts[b], oracle[1]);
}

#[test]
fn loocv_record_structure() {
    let frame = synthetic_frame("R-P", 14, 3, 1, 1);
    let s = spec(Family::Cart, &[("depth", 2.0)], 3);
    let out = loocv_evaluate(&frame, &s, 3, 0.2).unwrap();
    assert_eq!(out.records.len(), 14);
    let mut years: Vec<i32> = out.records.iter().map(|r| r.year).collect();
    years.sort_unstable();
    assert_eq!(years, frame.years);
    assert_eq!(out.importances.len(), 14);
    assert!(out.records.iter().all(|r| r.dataset == "R-P" && r.model == Family::Cart));

    let short = synthetic_frame("R-P", 9, 3, 1, 1);
    assert!(matches!(loocv_evaluate(&short, &s, 3, 0.2), Err(Error::Contract(_))));
}

#[test]
fn loocv_cart_reproduces_a_step_target() {
    let n = 24;
    let x: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    let noise: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
    let target: Vec<f64> = x.iter().map(|v| 0.1 * v - 0.05).collect();
    let frame = FeatureFrame::from_columns(
        "L-P",
        3,
        1,
        (0..n).map(|i| 1990 + i).collect(),
        vec![("x".into(), x), ("noise".into(), noise)],
        target,
        None,
    )
    .unwrap();
    let s = spec(Family::Cart, &[("depth", 3.0), ("min_leaf", 1.0), ("cp", 0.0)], 5);
    let out = loocv_evaluate(&frame, &s, 3, 0.2).unwrap();
    let score = OptionScore::from_records(Family::Cart, "L-P", &out.records).unwrap();
    assert!(score.metrics.mae < 1e-12, "mae {}", score.metrics.mae);
}

#[test]
fn loocv_flags_failed_folds() {
    // Every fold fails: the ols filter rejects a cutoff outside (0, 1).
    let frame = synthetic_frame("R-P", 12, 3, 1, 2);
    let s = spec(Family::OlsStepwise, &[("cor_cutoff", 0.0)], 1);
    assert!(matches!(loocv_evaluate(&frame, &s, 3, 0.2), Err(Error::Fit(_))));
    let all = loocv_evaluate(&frame, &s, 3, 1.0).unwrap();
    assert!(all.records.iter().all(|r| r.predicted.is_none()));
    assert!(all.importances.is_empty());
}

fn cheap_specs() -> Vec<ModelSpec> {
    vec![
        spec(Family::Cart, &[("depth", 3.0), ("min_leaf", 3.0)], 11),
        spec(Family::OlsStepwise, &[("cor_cutoff", 0.95)], 11),
    ]
}

#[test]
fn screen_cell_invariants() {
    let frames = vec![
        synthetic_frame("L-P", 30, 25, 3, 4),
        synthetic_frame("R-P", 30, 12, 2, 4),
    ];
    let opts = ScreeningOptions { inner_folds: 3, ..Default::default() };
    let res = screen_cell(&frames, &cheap_specs(), &opts).unwrap();
    assert_eq!(res.options.len(), 4);
    assert_eq!(res.selected.len(), 2);
    let w: f64 = res.selected.iter().map(|s| s.weight).sum();
    assert!((w - 1.0).abs() <= 1e-12);
    assert!(res.retained.len() <= DEFAULT_RETAIN);
    assert!(res.importance.values().all(|v| (0.0..=1.0).contains(v)));
    for pair in res.retained.windows(2) {
        let (a, b) = (res.importance[&pair[0]], res.importance[&pair[1]]);
        assert!(a > b || (a == b && pair[0] < pair[1]));
    }
    let union: BTreeSet<String> = res
        .selected
        .iter()
        .flat_map(|s| frames.iter().find(|f| f.dataset == s.dataset).unwrap().feature_names())
        .collect();
    assert!(res.retained.iter().all(|r| union.contains(r)));
    assert_eq!(res.retained_sources().len(), res.retained.len());
    assert_eq!(res.records.len(), 4 * 30);

    let again = screen_cell(&frames, &cheap_specs(), &opts).unwrap();
    assert_eq!(
        serde_json::to_string(&res).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
    let single = crate::par::with_jobs(1, || screen_cell(&frames, &cheap_specs(), &opts).unwrap());
    assert_eq!(res, single);
}

#[test]
fn screen_cell_needs_two_options() {
    let frames = vec![synthetic_frame("L-P", 20, 4, 1, 9)];
    let specs = vec![
        spec(Family::Cart, &[("depth", 2.0)], 1),
        spec(Family::OlsStepwise, &[("cor_cutoff", 0.0)], 1),
    ];
    let opts = ScreeningOptions { inner_folds: 3, ..Default::default() };
    assert!(matches!(screen_cell(&frames, &specs, &opts), Err(Error::Stage(_))));
}
