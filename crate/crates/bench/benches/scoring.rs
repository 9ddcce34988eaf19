use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kgm_bench::fixture;
use kgm_core::{Kernel, ModelSpec, Triple};
use std::hint::black_box;

fn scoring(c: &mut Criterion) {
    let variants = [
        ("sphere-linear", ModelSpec::sphere(Kernel::Linear)),
        (
            "sphere-gaussian",
            ModelSpec::sphere(Kernel::Gaussian { sigma: 1.0 }),
        ),
        (
            "hyperplane-poly",
            ModelSpec::hyperplane(
                Kernel::Polynomial {
                    degree: 2,
                    offset: 1.0,
                },
                false,
            ),
        ),
        ("transe", ModelSpec::transe()),
    ];
    let mut group = c.benchmark_group("score");
    for (name, spec) in variants {
        for dim in [50, 100] {
            let f = fixture(spec, 100, 4, 10, dim);
            let t = Triple::new(1, 2, 3);
            group.bench_with_input(BenchmarkId::new(name, dim), &t, |b, t| {
                b.iter(|| f.model.score_unchecked(black_box(t)))
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("gradients");
    for (name, spec) in variants {
        let f = fixture(spec, 100, 4, 10, 100);
        let t = Triple::new(1, 2, 3);
        group.bench_function(name, |b| {
            b.iter(|| f.model.score_gradients(black_box(&t)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scoring);
criterion_main!(benches);
