use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use modalpose_bench::BenchModel;
use modalpose_core::modal::PoseSolver;
use modalpose_core::retrieval::Matcher;
use modalpose_core::shape_db::sample_displacements;
use modalpose_core::{solve_modes, ScoringConfig};

fn scan(c: &mut Criterion) {
    let model = BenchModel::fixture(30);
    let db = model.database(1000);
    let target = db.records[417].contour.clone();
    let seq = Matcher::new(&db, ScoringConfig::default()).unwrap();
    let par = seq.clone().parallel(true);
    let mut g = c.benchmark_group("best_match_1000");
    g.bench_function("sequential", |b| {
        b.iter(|| seq.best_match(0, black_box(&target)).unwrap())
    });
    g.bench_function("parallel", |b| {
        b.iter(|| par.best_match(0, black_box(&target)).unwrap())
    });
    g.finish();
}

fn pose(c: &mut Criterion) {
    let model = BenchModel::fixture(30);
    let solver = PoseSolver::new(&model.basis, model.mesh.constraint_nodes(), 1e-6).unwrap();
    let m = model.mesh.constraint_nodes().len();
    let mut draw = 0;
    c.bench_function("pose_solve", |b| {
        b.iter_batched(
            || {
                draw += 1;
                sample_displacements(1, draw, m, 0.01)
            },
            |d| solver.solve(&d).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn eigensolve(c: &mut Criterion) {
    let model = BenchModel::fixture(30);
    let mut g = c.benchmark_group("eigensolve");
    g.sample_size(10);
    g.bench_function("fixture_30_modes", |b| {
        b.iter(|| solve_modes(black_box(&model.system), 30).unwrap())
    });
    g.finish();
}

criterion_group!(benches, scan, pose, eigensolve);
criterion_main!(benches);
