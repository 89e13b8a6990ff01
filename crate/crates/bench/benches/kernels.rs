use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oed_core::nalgebra::DMatrix;
use oed_core::{make_gram, KernelSpec, PoolMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_pool(seed: u64, m: usize, d: usize) -> PoolMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PoolMatrix::new(DMatrix::from_fn(m, d, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn bench_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("make_gram");
    group.sample_size(10);
    let pool = random_pool(2, 500, 50);
    for spec in [
        KernelSpec::Linear,
        KernelSpec::Rbf { gamma: 0.02 },
        KernelSpec::NtkFc { depth: 3 },
    ] {
        group.bench_with_input(
            BenchmarkId::new("m500_d50", format!("{spec:?}")),
            &spec,
            |b, spec| b.iter(|| make_gram(&pool, spec).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
