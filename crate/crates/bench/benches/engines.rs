use criterion::{criterion_group, criterion_main, Criterion};

fn bench_generate(c: &mut Criterion) {
    c.bench_function("generate_random_scenario(6)", |b| {
        b.iter(|| ttscore_core::generate_random_scenario(std::hint::black_box(6), 1).unwrap())
    });
}

criterion_group!(benches, bench_generate);
criterion_main!(benches);
