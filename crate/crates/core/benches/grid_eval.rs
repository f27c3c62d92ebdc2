use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use greedy_loewner::greedy::{discrepancy, GreedyConfig};
use greedy_loewner::lti::{self, FrequencyGrid};
use greedy_loewner::loewner::{self, MeasurementSet};
use greedy_loewner::Complex64;
use std::hint::black_box;

fn eval(c: &mut Criterion) {
    let plant = lti::make_penzl();
    let mut group = c.benchmark_group("eval_many");
    group.sample_size(10);
    for m in [50usize, 200, 500] {
        let pts = FrequencyGrid::logspace(0.1, 1e3, m).unwrap().points();
        group.bench_with_input(BenchmarkId::new("parallel", m), &pts, |b, p| {
            b.iter(|| plant.eval_many(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", m), &pts, |b, p| {
            b.iter(|| plant.eval_many_sequential(black_box(p)).unwrap())
        });
    }
    group.finish();
}

/// One greedy step's worth of work: discrepancy between two interpolants of
/// order ~20 over the whole grid.
fn step(c: &mut Criterion) {
    let grid = FrequencyGrid::logspace(0.1, 1e3, 500).unwrap();
    let plant = lti::make_penzl();
    let cfg = GreedyConfig::new(grid.clone());
    let fit = |count| {
        let pts = greedy_loewner::greedy::initial_points(&grid, count).unwrap();
        let vals = plant.eval_many(&pts).unwrap();
        let ms = MeasurementSet::new(pts, vals).unwrap();
        loewner::fit_real(&ms, Complex64::new(0.0, 0.0), cfg.rank_tol).unwrap()
    };
    let (a, b) = (fit(20), fit(22));
    let pts = grid.points();
    c.bench_function("discrepancy_500", |bench| {
        bench.iter(|| discrepancy(black_box(&a), black_box(&b), &pts).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = eval, step
}
criterion_main!(benches);
