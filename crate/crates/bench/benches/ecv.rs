use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ecv_bench::{block_network, clustered_points};
use ecv_core::cluster::kmeans;
use ecv_core::ecv::{select_block_model, EcvConfig, Loss};
use ecv_core::holdout::HoldoutMask;
use ecv_core::lowrank::{complete, partial_svd, SvdOptions};
use ecv_core::rng::derive;

fn svd(c: &mut Criterion) {
    let a = block_network(600, 3, 40.0, 1);
    let mut g = c.benchmark_group("partial_svd");
    g.sample_size(20);
    g.bench_function("n600_k6_default", |b| {
        b.iter(|| partial_svd(&a, 6, &SvdOptions::default(), &mut derive(2, 0)).unwrap())
    });
    g.bench_function("n600_k6_loose", |b| {
        b.iter(|| partial_svd(&a, 6, &EcvConfig::default().svd, &mut derive(2, 0)).unwrap())
    });
    g.finish();
}

fn completion(c: &mut Criterion) {
    let a = block_network(600, 3, 40.0, 1);
    let mask = HoldoutMask::sample(600, 0.9, false, &mut derive(3, 0)).unwrap();
    let mut g = c.benchmark_group("complete");
    g.sample_size(20);
    g.bench_function("n600_rank3", |b| {
        b.iter(|| complete(&a, &mask, 3, &mut derive(4, 0)).unwrap())
    });
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let points = clustered_points(2000, 4);
    c.bench_function("kmeans_n2000_k4", |b| {
        b.iter(|| kmeans(black_box(&points), 4, 10, &mut derive(5, 0)).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let a = block_network(300, 3, 30.0, 6);
    let mut g = c.benchmark_group("ecv");
    g.sample_size(10);
    g.bench_function("select_block_model_n300_kmax4", |b| {
        b.iter(|| {
            select_block_model(&a, 4, Loss::L2, &EcvConfig::default(), &mut derive(7, 0)).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, svd, completion, clustering, selection);
criterion_main!(benches);
