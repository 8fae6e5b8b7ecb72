//! One screening cell on the bundled fixture, on a single worker versus
//! the default pool. Build with `--no-default-features` for the purely
//! sequential code path.

use std::hint::black_box;

use agricaf::fixture::{desk_config, generate, DEFAULT_SEED};
use agricaf::model_zoo::{Family, Grid, ModelSpec};
use agricaf::par;
use agricaf::screening::{screen_cell, ScreeningOptions};
use agricaf::transform::{assemble_datasets, AssemblyOptions, PreparedInputs};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_screen(c: &mut Criterion) {
    let cfg = desk_config(DEFAULT_SEED);
    let inputs = generate(DEFAULT_SEED);
    let assembly: AssemblyOptions = serde_json::from_value(cfg["assembly"].clone()).unwrap();
    let prep = PreparedInputs::new(&inputs, "maize", &assembly).unwrap();
    let frames = assemble_datasets(&prep, 4, 1).unwrap();
    let models: std::collections::BTreeMap<Family, Grid> =
        serde_json::from_value(cfg["models"].clone()).unwrap();
    let specs: Vec<ModelSpec> = models
        .into_iter()
        .map(|(family, grid)| ModelSpec { family, grid, seed: DEFAULT_SEED })
        .collect();
    let opts = ScreeningOptions {
        inner_folds: 3,
        ..ScreeningOptions::default()
    };

    let mut group = c.benchmark_group("screen_cell");
    group.sample_size(10);
    for (label, jobs) in [("sequential", 1), ("parallel", 0)] {
        group.bench_function(label, |b| {
            b.iter(|| par::with_jobs(jobs, || black_box(screen_cell(&frames, &specs, &opts).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_screen);
criterion_main!(benches);
