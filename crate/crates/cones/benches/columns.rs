//! Multi-right-hand-side column solves: rayon fan-out vs sequential loop.
//!
//! The hot path of the pipeline is computing one response column per cone
//! (plus the base vector) against a shared factorization. `solve_many`
//! dispatches over rayon when built with the default `parallel` feature and
//! degrades to a plain loop otherwise; both paths are timed here, along with
//! the end-to-end pipeline at two mesh sizes.

use cones::driver::{run_pipeline, Config};
use cones::shapes;
use cones::sparse::PinnedSystem;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_column_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("column_solves");
    for subdiv in [3usize, 4, 5] {
        let mesh = shapes::icosphere(subdiv);
        let n = mesh.n_vertices();
        let l = mesh.cotan_laplacian().unwrap();
        let sys = PinnedSystem::new(&l, 0).unwrap();
        // 30 impulse right-hand sides: the active-set width of an angle solve.
        let rhss: Vec<Vec<f64>> = (0..30)
            .map(|k| {
                let mut r = vec![0.0; n];
                r[1 + k * (n - 2) / 30] = std::f64::consts::FRAC_PI_2;
                r
            })
            .collect();
        group.bench_with_input(BenchmarkId::new("sequential", n), &rhss, |b, rhss| {
            b.iter(|| sys.solve_many(std::hint::black_box(rhss), false))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &rhss, |b, rhss| {
            b.iter(|| sys.solve_many(std::hint::black_box(rhss), true))
        });
    }
    group.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for subdiv in [3usize, 4] {
        let n = shapes::icosphere(subdiv).n_vertices();
        for parallel in [false, true] {
            let label = if parallel { "parallel" } else { "sequential" };
            group.bench_function(BenchmarkId::new(label, n), |b| {
                b.iter(|| {
                    let mut cfg = Config::default();
                    cfg.parallel = parallel;
                    run_pipeline(shapes::icosphere(subdiv), &cfg).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_column_solves, bench_pipeline);
criterion_main!(benches);
