use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latproxy::comparators::{enumerate_even_splits, estimate_pci, estimate_pci_averaged, SplitMode};
use latproxy::estimators::{estimate_from_fit, estimate_latent_proxy_with};
use latproxy::fitting::{fit_mimic, FitConfig};
use latproxy::inference::{bootstrap_ci, BootstrapConfig};
use latproxy::model::posterior_means;
use latproxy::{ContrastSpec, LatentConfig, Method, MethodEstimator, ScenarioId};
use latproxy_bench::{sample, selected_fit};
use std::hint::black_box;

fn fitting(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_mimic");
    for n in [500, 2000, 8000] {
        let data = sample(ScenarioId::Baseline, n);
        g.bench_with_input(BenchmarkId::new("baseline_k2", n), &data, |b, d| {
            b.iter(|| fit_mimic(black_box(d), 2, &FitConfig::default()).unwrap())
        });
    }
    let data = sample(ScenarioId::PkRatio(16), 1000);
    g.bench_function("pk_ratio_p16_k2", |b| b.iter(|| fit_mimic(black_box(&data), 2, &FitConfig::default()).unwrap()));
    g.finish();
}

fn latent(c: &mut Criterion) {
    let data = sample(ScenarioId::Baseline, 1000);
    let fit = selected_fit(&data);
    let cfg = LatentConfig::default();
    let contrast = ContrastSpec::default();
    c.bench_function("posterior_means/baseline_1000", |b| {
        b.iter(|| posterior_means(black_box(&fit.params), &data, true).unwrap())
    });
    c.bench_function("estimate_from_fit/baseline_1000", |b| {
        b.iter(|| estimate_from_fit(black_box(&data), &fit.params, &contrast, &cfg).unwrap())
    });
    c.bench_function("latent_with_selection/baseline_1000", |b| {
        b.iter(|| estimate_latent_proxy_with(black_box(&data), &contrast, &cfg).unwrap())
    });
}

fn pci(c: &mut Criterion) {
    let contrast = ContrastSpec::default();
    let data = sample(ScenarioId::Baseline, 1000);
    let splits = enumerate_even_splits(data.p(), SplitMode::All).unwrap();
    c.bench_function("pci/one_split_p8", |b| b.iter(|| estimate_pci(black_box(&data), &contrast, &splits[0]).unwrap()));
    c.bench_function("pci/all_70_splits_p8", |b| {
        b.iter(|| estimate_pci_averaged(black_box(&data), &contrast, &splits).unwrap())
    });
}

fn bootstrap(c: &mut Criterion) {
    let data = sample(ScenarioId::Coverage, 500);
    let est = MethodEstimator::new(Method::Latent);
    let cfg = BootstrapConfig {
        resamples: 100,
        ..BootstrapConfig::default()
    };
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("latent_100_resamples", |b| b.iter(|| bootstrap_ci(black_box(&data), &est, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, fitting, latent, pci, bootstrap);
criterion_main!(benches);
