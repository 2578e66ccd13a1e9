use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use xmem::buffer_pq::pq_sort;
use xmem::distribution_sort::external_distribution_sort;
use xmem::harness::Distribution;
use xmem::merge_sort::external_merge_sort;
use xmem::split_sort::split_sort;
use xmem_bench::staged;

const M: usize = 1 << 10;
const B: usize = 1 << 5;

fn external_sorts(c: &mut Criterion) {
    let mut group = c.benchmark_group("external_sort");
    group.sample_size(10);
    for n in [1usize << 14, 1 << 16] {
        group.bench_with_input(BenchmarkId::new("merge", n), &n, |bch, &n| {
            bch.iter_batched(
                || staged(n, M, B, Distribution::Uniform, 1),
                |(mut d, r)| external_merge_sort(&mut d, r).unwrap(),
                BatchSize::LargeInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("dist", n), &n, |bch, &n| {
            bch.iter_batched(
                || staged(n, M, B, Distribution::Uniform, 1),
                |(mut d, r)| external_distribution_sort(&mut d, r).unwrap(),
                BatchSize::LargeInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("split", n), &n, |bch, &n| {
            bch.iter_batched(
                || staged(n, M, B, Distribution::Uniform, 1),
                |(mut d, r)| split_sort(&mut d, r).unwrap(),
                BatchSize::LargeInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("pq", n), &n, |bch, &n| {
            bch.iter_batched(
                || staged(n, M, B, Distribution::Uniform, 1),
                |(mut d, r)| pq_sort(&mut d, r).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, external_sorts);
criterion_main!(benches);
