use std::hint::black_box;

use askhelp::cp::{adjust_epsilon, fit_scores, Adjustment, ModelMode};
use askhelp::harness::{Experiment, ExperimentConfig};
use askhelp::{beta_inv_cdf, BetaParams, Method, ScorerSpec, Setting, SyntheticSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

fn beta(c: &mut Criterion) {
    let mut group = c.benchmark_group("beta_inv_cdf");
    for (a, b) in [(2.0, 5.0), (341.0, 60.0), (3400.0, 600.0)] {
        let p = BetaParams::new(a, b).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{a}x{b}")), &p, |bench, p| {
            bench.iter(|| beta_inv_cdf(*p, black_box(0.01)).unwrap())
        });
    }
    group.finish();
    c.bench_function("adjust_epsilon/n=4000", |b| b.iter(|| adjust_epsilon(0.15, 0.01, black_box(4000)).unwrap()));
}

fn calibration(c: &mut Criterion) {
    let mut rng = askhelp::seed::rng(1, &[]);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    c.bench_function("fit_scores/n=10000", |b| {
        b.iter(|| fit_scores(black_box(&scores), 0.15, 0.01, Adjustment::DatasetConditional, ModelMode::Single).unwrap())
    });
}

fn experiment(c: &mut Criterion) {
    let mut config = ExperimentConfig::new(
        Setting::Spatial,
        ScorerSpec::Synthetic(SyntheticSpec::new(4.0, 0.05, 1.0).unwrap()),
        Method::Knowno,
        0.15,
        3,
    );
    config.threads = 1;
    let experiment = Experiment::prepare(&config).unwrap();
    c.bench_function("evaluate/spatial 400+200", |b| {
        b.iter(|| experiment.evaluate(Method::Knowno, black_box(0.15)).unwrap())
    });
}

criterion_group!(benches, beta, calibration, experiment);
criterion_main!(benches);
