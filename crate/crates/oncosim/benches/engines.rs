//! Compares the sequential and rayon engines on the two data-parallel
//! workloads: cohort simulation and multi-start calibration. Build with
//! `--no-default-features` to benchmark a binary without the parallel
//! paths compiled in at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oncosim::calibrate::{colon_target, fit_seq, FitBudget};
use oncosim::model::{build_transition_matrix, RateParams};
use oncosim::montecarlo::{simulate_cohort_seq, SimOptions};

fn bench_cohort(c: &mut Criterion) {
    let matrix = build_transition_matrix(&RateParams::baseline()).unwrap();
    let mut group = c.benchmark_group("simulate_cohort");
    for n in [1_000u64, 10_000, 100_000] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(simulate_cohort_seq(&matrix, n, 42, SimOptions::default()).unwrap()))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| {
                black_box(
                    oncosim::montecarlo::simulate_cohort_par(&matrix, n, 42, SimOptions::default())
                        .unwrap(),
                )
            })
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let target = colon_target();
    let budget = FitBudget {
        restarts: 8,
        max_iters: 400,
        tol: 1e-9,
    };
    let mut group = c.benchmark_group("fit_restarts");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(fit_seq(&target, Some(0.0), 42, &budget).unwrap()))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(oncosim::calibrate::fit(&target, Some(0.0), 42, &budget).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_cohort, bench_fit);
criterion_main!(benches);
