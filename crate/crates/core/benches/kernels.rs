//! Sequential (one job) against the default pool for the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use histmap::field::{compose_fields, warp_raster, DisplacementField};
use histmap::instances::{split_tiles, stitch_tiles, InstanceClass, InstanceMap, TileGrid};
use histmap::metrics::ssim;
use histmap::network::{betweenness, DistanceMode, StreetGraph};
use histmap::par::with_jobs;
use histmap::raster::Raster;

const N: usize = 512;

fn paths() -> [(&'static str, Option<usize>); 2] {
    [("sequential", Some(1)), ("parallel", None)]
}

fn swirl() -> DisplacementField {
    DisplacementField::from_fn(N, N, |x, y| {
        let (u, v) = (x as f64 / N as f64, y as f64 / N as f64);
        (6.0 * (v * 6.0).sin(), 4.0 * (u * 5.0).cos())
    })
    .unwrap()
}

fn texture(seed: usize) -> Raster {
    Raster::from_fn(N, N, 3, |x, y, c| ((x * 7 + y * 13 + c * 29 + seed) % 256) as u8).unwrap()
}

fn grid_graph(k: usize) -> StreetGraph {
    let nodes = (0..k * k).map(|i| [(i % k) as f64, (i / k) as f64]).collect();
    let mut edges = Vec::new();
    for i in 0..k * k {
        let len = 1.0 + (i % 3) as f64 * 0.25;
        if i % k + 1 < k {
            edges.push((i, i + 1, len));
        }
        if i / k + 1 < k {
            edges.push((i, i + k, len));
        }
    }
    StreetGraph::from_edges(nodes, &edges)
}

fn sheet() -> InstanceMap {
    let n = 2 * N;
    let labels = (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            if x % 64 < 48 && y % 64 < 40 {
                ((y / 64) * 16 + x / 64 + 1) as u32
            } else {
                0
            }
        })
        .collect();
    InstanceMap::with_uniform_class(n, n, labels, InstanceClass::Building).unwrap()
}

fn kernels(c: &mut Criterion) {
    let field = swirl();
    let img = texture(0);
    let other = texture(17);
    let graph = grid_graph(14);
    let map = sheet();
    let grid = TileGrid::new(512, 256, map.height(), map.width()).unwrap();
    let tiles = split_tiles(&map, &grid).unwrap();

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, jobs) in paths() {
        g.bench_with_input(BenchmarkId::new("warp_raster", name), &jobs, |b, &j| {
            b.iter(|| with_jobs(j, || warp_raster(&img, &field)))
        });
        g.bench_with_input(BenchmarkId::new("compose", name), &jobs, |b, &j| {
            b.iter(|| with_jobs(j, || compose_fields(&field, &field)))
        });
        g.bench_with_input(BenchmarkId::new("ssim", name), &jobs, |b, &j| {
            b.iter(|| with_jobs(j, || ssim(&img, &other).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("betweenness", name), &jobs, |b, &j| {
            b.iter(|| with_jobs(j, || betweenness(&graph, DistanceMode::Metric)))
        });
        g.bench_with_input(BenchmarkId::new("stitch", name), &jobs, |b, &j| {
            b.iter(|| with_jobs(j, || stitch_tiles(&tiles, &grid).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
