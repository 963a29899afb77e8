//! Thread-pool size comparison for the chunk-parallel kernels. Build with
//! `--no-default-features` to measure the sequential fallback instead.

use cellscape::spatial::{neighborhood_enrichment, ripley_points, EnrichmentParams, GraphSpec, RegionBounds};
use cellscape::summaries::{histogram_values, Bins};
use cellscape::{par, CellTable};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

fn thread_counts() -> Vec<usize> {
    let max = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let mut v = vec![1, max];
    v.dedup();
    v
}

fn uniform(n: usize, side: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = par::rng(seed);
    (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect()
}

fn histogram(c: &mut Criterion) {
    let mut rng = par::rng(1);
    let values: Vec<f32> = (0..2_000_000).map(|_| rng.random::<f32>()).collect();
    let mut g = c.benchmark_group("histogram_2M_256");
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || histogram_values(&values, &Bins::Count(256)).unwrap()))
        });
    }
    g.finish();
}

fn ripley(c: &mut Criterion) {
    let pts = uniform(2000, 1000.0, 2);
    let bounds = RegionBounds::new(0.0, 1000.0, 0.0, 1000.0).unwrap();
    let radii = [20.0, 40.0, 60.0, 80.0, 100.0];
    let mut g = c.benchmark_group("ripley_2000");
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || ripley_points(&pts, &pts, &radii, &bounds, true).unwrap()))
        });
    }
    g.finish();
}

fn enrichment(c: &mut Criterion) {
    let pts = uniform(3000, 1000.0, 3);
    let mut rng = par::rng(4);
    let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], p[1])).collect();
    let labels: Vec<String> = (0..3000).map(|_| format!("P{}", rng.random_range(0..5))).collect();
    let table = CellTable::from_parts(&coords, vec![], vec![]).unwrap().add_annotation("ph", &labels).unwrap();
    let mut params = EnrichmentParams::new("ph", GraphSpec::Knn(6));
    params.n_permutations = 200;
    let mut g = c.benchmark_group("enrichment_3000_200perm");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || neighborhood_enrichment(&table, &params).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, histogram, ripley, enrichment);
criterion_main!(benches);
