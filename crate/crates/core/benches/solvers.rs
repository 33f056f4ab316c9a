//! Run once with default features and once with `--no-default-features`;
//! the group name carries the mode so criterion keeps both baselines.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hevo_core::aco::{run_aco, AcoParams, HeuristicMatrix};
use hevo_core::constructive::{construct_tour, StatisticalSelector};
use hevo_core::matrix::Matrix;
use hevo_core::par;
use hevo_core::problem::generate_instance;
use hevo_core::{Instance, ProblemKind};

fn mode() -> &'static str {
    if par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn aco(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("aco_tsp/{}", mode()));
    group.sample_size(10);
    for n in [50, 100] {
        let inst = generate_instance(ProblemKind::Tsp, n, 1).unwrap();
        let Instance::Tsp(t) = &inst else {
            unreachable!()
        };
        let eta = t.dist.map(|d| if d > 0.0 { 1.0 / d } else { 0.0 });
        let eta = HeuristicMatrix::new(&inst, eta).unwrap();
        let params = AcoParams {
            n_iterations: 20,
            ..AcoParams::preset(ProblemKind::Tsp)
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| run_aco(&inst, &eta, &params).unwrap())
        });
    }
    group.finish();
}

fn constructive(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("constructive/{}", mode()));
    group.sample_size(10);
    for n in [200, 500] {
        let Instance::Tsp(t) = generate_instance(ProblemKind::Tsp, n, 2).unwrap() else {
            unreachable!()
        };
        let sel = StatisticalSelector::evolved();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| construct_tour(&t, &sel, 0).unwrap())
        });
    }
    group.finish();
}

fn matrix_map(c: &mut Criterion) {
    let m = Matrix::from_fn(500, 500, |i, j| (i * 31 + j) as f64);
    c.bench_function(&format!("row_sums/{}", mode()), |b| {
        b.iter(|| par::map_range(m.rows(), |i| m.row(i).iter().sum::<f64>()))
    });
}

criterion_group!(benches, aco, constructive, matrix_map);
criterion_main!(benches);
