use chaotrans::dynamics::{AtomState, EnergyH, LatticeParams};
use chaotrans::integrator::{integrate, IntegratorConfig};
use chaotrans::nodemap::{CrossingOutcome, JumpAmplitude, MapWalk};
use chaotrans::par::{map_indexed, map_indexed_sequential};
use chaotrans::seed::task_rng;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

const TASKS: usize = 16;

fn walk_task(i: usize) -> u64 {
    let mut w = MapWalk::new(0.0, JumpAmplitude(0.0287), EnergyH(0.724), task_rng(1, i as u64)).unwrap();
    (0..20_000).filter(|_| w.step().outcome != CrossingOutcome::Continue).count() as u64
}

fn ode_task(i: usize) -> usize {
    let s0 = AtomState::normalized(1e-3 * i as f64, 535.0, 0.7071, 0.0, 0.7071).unwrap();
    let cfg = IntegratorConfig { abs_tol: 1e-10, rel_tol: 1e-10, sample_stride: 0, ..IntegratorConfig::default() };
    integrate(&s0, LatticeParams::with_delta(-0.001), cfg, 2e4).unwrap().crossings.len()
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("map_ensemble");
    g.bench_function(BenchmarkId::new("parallel", TASKS), |b| b.iter(|| black_box(map_indexed(TASKS, walk_task))));
    g.bench_function(BenchmarkId::new("sequential", TASKS), |b| {
        b.iter(|| black_box(map_indexed_sequential(TASKS, walk_task)))
    });
    g.finish();

    let mut g = c.benchmark_group("ode_ensemble");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", TASKS), |b| b.iter(|| black_box(map_indexed(TASKS, ode_task))));
    g.bench_function(BenchmarkId::new("sequential", TASKS), |b| {
        b.iter(|| black_box(map_indexed_sequential(TASKS, ode_task)))
    });
    g.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
