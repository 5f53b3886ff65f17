use std::hint::black_box;

use bondnet::linalg::SkylineLdlt;
use bondnet::{jacobian, residual, solve};
use bondnet_bench::{grid_problem, intact, stretched};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const SIZES: [(usize, usize, usize); 3] = [(4, 4, 4), (8, 6, 6), (12, 8, 8)];

fn label((nx, ny, nz): (usize, usize, usize)) -> String {
    format!("{nx}x{ny}x{nz}")
}

fn bench_residual(c: &mut Criterion) {
    let mut group = c.benchmark_group("residual");
    for dims in SIZES {
        let (prob, _) = grid_problem(dims.0, dims.1, dims.2);
        let x = stretched(&prob);
        let states = intact(&prob);
        group.bench_with_input(BenchmarkId::from_parameter(label(dims)), &x, |b, x| {
            b.iter(|| residual(black_box(&prob), black_box(x), &states).unwrap())
        });
    }
    group.finish();
}

fn bench_jacobian(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobian");
    for dims in SIZES {
        let (prob, _) = grid_problem(dims.0, dims.1, dims.2);
        let x = stretched(&prob);
        let states = intact(&prob);
        group.bench_with_input(BenchmarkId::new("assemble", label(dims)), &x, |b, x| {
            b.iter(|| jacobian(black_box(&prob), black_box(x), &states).unwrap())
        });
        let mut j = jacobian(&prob, &x, &states).unwrap();
        // keep the factorization away from the zero-stiffness shear modes
        j.add_diagonal(1e-6);
        group.bench_with_input(BenchmarkId::new("factor", label(dims)), &j, |b, j| {
            b.iter(|| SkylineLdlt::factor(black_box(j)).unwrap())
        });
    }
    group.finish();
}

fn bench_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for dims in SIZES {
        let (prob, opts) = grid_problem(dims.0, dims.1, dims.2);
        group.bench_function(BenchmarkId::from_parameter(label(dims)), |b| {
            b.iter(|| {
                let report = solve(black_box(&prob), &opts, None).unwrap();
                assert!(report.converged());
                report
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_residual, bench_jacobian, bench_solve);
criterion_main!(benches);
