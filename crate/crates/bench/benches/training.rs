use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kgm_bench::fixture;
use kgm_core::{compute_relation_stats, init_model, train, Kernel, ModelSpec, TrainConfig};

fn training(c: &mut Criterion) {
    let f = fixture(ModelSpec::sphere(Kernel::Linear), 1_000, 10, 10_000, 50);
    let stats = compute_relation_stats(&f.triples, 1.5).unwrap();
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for workers in [1, 4] {
        let mut config = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 50);
        config.epochs = 1;
        config.workers = workers;
        config.batch_size = 100;
        let init = init_model(&f.vocab, &config).unwrap();
        group.bench_with_input(
            BenchmarkId::new("workers", workers),
            &config,
            |b, config| {
                b.iter_batched(
                    || init.clone(),
                    |mut model| {
                        train(&mut model, &f.triples, &stats, &f.filter, config, |_| {}).unwrap()
                    },
                    criterion::BatchSize::LargeInput,
                )
            },
        );
    }
    group.finish();
}

criterion_group!(benches, training);
criterion_main!(benches);
