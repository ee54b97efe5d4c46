//! Compares the data-parallel code paths against single-threaded execution.
//!
//! With the default `parallel` feature the same workload runs once on the
//! global rayon pool and once on a one-thread pool; built with
//! `--no-default-features` the benchmark times the plain sequential path.

use criterion::{criterion_group, criterion_main, Criterion};
use predmetric::models::{builtin_location_scale, LocationScalePairSpec, SymmetricBase};
use predmetric::priors::{prior_right_invariant, volume_element_prior};
use predmetric::probes::probe_points;
use predmetric::simulate::{mc_risk, SimPlan};
use predmetric::{models::ModelPair, priors::superharmonic_check};
use std::hint::black_box;

fn pair() -> ModelPair {
    builtin_location_scale(LocationScalePairSpec {
        phi: SymmetricBase::standard_normal(),
        phi_tilde: SymmetricBase::standard_normal(),
    })
    .unwrap()
}

fn run_mc(pair: &ModelPair) {
    let priors = vec![
        prior_right_invariant(pair).unwrap(),
        volume_element_prior(pair),
    ];
    let mut plan = SimPlan::new(vec![0.0, 1.0], 20, 24, 99);
    plan.quadrature.nodes_per_axis = 32;
    black_box(mc_risk(pair, &priors, &plan).unwrap());
}

fn run_probe_sweep(pair: &ModelPair) {
    let metric = pair.predictive_metric();
    let prior = prior_right_invariant(pair).unwrap();
    let probes = probe_points(pair, 160, 7, 0.8).unwrap();
    black_box(superharmonic_check(prior.ratio(), &metric, &probes, 1e-7).unwrap());
}

#[cfg(feature = "parallel")]
fn bench_modes(c: &mut Criterion) {
    let pair = pair();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();

    let mut group = c.benchmark_group("mc_risk");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| run_mc(&pair)));
    group.bench_function("single_thread", |b| {
        b.iter(|| single.install(|| run_mc(&pair)))
    });
    group.finish();

    let mut group = c.benchmark_group("superharmonic_scan");
    group.sample_size(20);
    group.bench_function("parallel", |b| b.iter(|| run_probe_sweep(&pair)));
    group.bench_function("single_thread", |b| {
        b.iter(|| single.install(|| run_probe_sweep(&pair)))
    });
    group.finish();
}

#[cfg(not(feature = "parallel"))]
fn bench_modes(c: &mut Criterion) {
    let pair = pair();
    let mut group = c.benchmark_group("mc_risk");
    group.sample_size(10);
    group.bench_function("sequential_build", |b| b.iter(|| run_mc(&pair)));
    group.finish();

    let mut group = c.benchmark_group("superharmonic_scan");
    group.sample_size(20);
    group.bench_function("sequential_build", |b| b.iter(|| run_probe_sweep(&pair)));
    group.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
