//! Micro-benchmarks for the hot paths: sketch construction, the two search
//! phases on a single fragment, and whole queries across the variant ladder.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dkws_core::gen::{erdos_renyi, sample_queries};
use dkws_core::graph::Query;
use dkws_core::kernel::{Kernel, KernelOpts, NullLink};
use dkws_core::partition::partition_hash;
use dkws_core::runtime::{run_query, RunConfig, Variant};
use dkws_core::sketch::SketchSet;

fn bench_sketch_build(c: &mut Criterion) {
    let g = erdos_renyi(300, 4.0, 20, 1.0, 7);
    c.bench_function("sketch_build_300", |b| {
        b.iter(|| SketchSet::build(&g, 4, None));
    });
}

fn bench_backward(c: &mut Criterion) {
    let g = erdos_renyi(500, 4.0, 20, 1.0, 11);
    let frags = partition_hash(&g, 1, 0).unwrap();
    let kws = sample_queries(&g, 3, 1, 5).remove(0);
    let query = Query::new(kws, 3.0, 10).unwrap();
    c.bench_function("backward_expand_500", |b| {
        b.iter(|| {
            let mut kernel = Kernel::new(
                &g,
                &frags.fragments[0],
                &query,
                None,
                KernelOpts { use_bounds: true, ..KernelOpts::flood() },
            );
            kernel.backward_init_origins();
            kernel.backward_expand(&mut NullLink);
            kernel.visited
        });
    });
}

fn bench_variants(c: &mut Criterion) {
    let g = erdos_renyi(500, 4.0, 20, 1.0, 13);
    let frags = partition_hash(&g, 4, 3).unwrap();
    let sketches = SketchSet::build(&g, 4, Some(&frags));
    let kws = sample_queries(&g, 4, 1, 9).remove(0);
    let query = Query::new(kws, 3.0, 10).unwrap();
    let mut group = c.benchmark_group("query_500_m4");
    for variant in Variant::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(variant.name()), &variant, |b, &v| {
            let cfg = RunConfig::new(v);
            b.iter(|| run_query(&g, &frags, Some(&sketches), &query, &cfg).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sketch_build, bench_backward, bench_variants);
criterion_main!(benches);
