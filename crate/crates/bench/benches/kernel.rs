use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use divrank_bench::{gaussian, rng, unit_embeddings};
use divrank_core::kernel::composite_from_parts;
use divrank_core::KernelHyperparams;

fn composite_build(c: &mut Criterion) {
    let mut r = rng(2);
    let hp = KernelHyperparams::default();
    let (ma, mi) = (gaussian(64, &mut r), gaussian(64, &mut r));
    let mut group = c.benchmark_group("composite_kernel/d64");
    for n in [128, 256, 512, 1024] {
        let e = unit_embeddings(n, 64, &mut r);
        let refs: Vec<&[f64]> = e.iter().map(Vec::as_slice).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| composite_from_parts(&refs, &ma, &mi, &hp).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, composite_build);
criterion_main!(benches);
