use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diffmig_bench::paths;
use diffmig_core::estimate::{bootstrap_collective, bootstrap_effective, fit_effective, DiffusionSum};
use diffmig_core::greens::nx_if;
use diffmig_core::proportions::{grid_partition, proportion_matrix};
use diffmig_core::{BootstrapSettings, DomainRect, ImageSumControl, Interval, MotionParams};

fn box_integral(c: &mut Criterion) {
    let ctrl = ImageSumControl::default();
    let a_i = Interval::new(0.1, 0.4).unwrap();
    let a_f = Interval::new(0.5, 0.9).unwrap();
    let mut g = c.benchmark_group("nx_if");
    // Wide kernels need more image shells.
    for d_int in [1e-3, 1e-1, 10.0] {
        g.bench_with_input(BenchmarkId::from_parameter(d_int), &d_int, |b, &d| {
            b.iter(|| nx_if(black_box(&a_i), black_box(&a_f), 0.05, d, 1.0, &ctrl).unwrap())
        });
    }
    g.finish();

    let dom = DomainRect::new(4.0, 3.0).unwrap();
    let areas = grid_partition(&dom, &[0.25, 0.5, 0.75], &[0.3, 0.6]).unwrap();
    let p = MotionParams::isotropic(0.01, -0.02, 0.2);
    c.bench_function("proportion_matrix 12x12", |b| {
        b.iter(|| proportion_matrix(&areas, &areas, &p, 5.0, &dom, &ctrl, true).unwrap())
    });
}

fn estimators(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_effective");
    for n in [100, 1000, 10_000] {
        let p = &paths(1, n, 7)[0];
        let groups = p.groups(0.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_effective(black_box(p), &groups, DiffusionSum::Banded).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let settings = BootstrapSettings {
        replicates: 200,
        level: 0.9,
        seed: 1,
    };
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    let one = &paths(1, 500, 3)[0];
    let groups = one.groups(0.0).unwrap();
    g.bench_function("effective n=500 B=200", |b| {
        b.iter(|| bootstrap_effective(one, &groups, &settings, DiffusionSum::Banded).unwrap())
    });
    let ensemble = paths(19, 200, 4);
    g.bench_function("collective 19x200 B=200", |b| {
        b.iter(|| bootstrap_collective(&ensemble, 0.0, &settings, DiffusionSum::Banded).unwrap())
    });
    g.finish();
}

criterion_group!(benches, box_integral, estimators, bootstrap);
criterion_main!(benches);
