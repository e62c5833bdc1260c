use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use tfch_core::harness::random_initial;
use tfch_core::quadform::{assemble, min_eigenvalue, DEFAULT_EIGEN_TOL};
use tfch_core::solver::{ModelParams, Scheme, Solver, SolverOptions};
use tfch_core::spectral::Grid2D;
use tfch_core::timemesh::{make_graded, make_random};
use tfch_core::{CompanionKernels, KernelFamily, KernelTable};

fn kernel_tables(c: &mut Criterion) {
    let mesh = make_random(1.0, 400, 7).unwrap();
    c.bench_function("l1 table N=400", |b| {
        b.iter(|| KernelTable::new(KernelFamily::L1, 0.5, black_box(mesh.clone())).unwrap())
    });
    let table = KernelTable::new(KernelFamily::L1, 0.5, mesh).unwrap();
    c.bench_function("doc+dcc N=400", |b| b.iter(|| CompanionKernels::build(black_box(&table), 400).unwrap()));
}

fn eigenvalues(c: &mut Criterion) {
    let table = KernelTable::new(KernelFamily::L1h, 0.5, make_graded(1.0, 200, 2.0).unwrap()).unwrap();
    c.bench_function("lambda_min l1h N=200", |b| {
        b.iter(|| min_eigenvalue(&assemble(black_box(&table), 200).unwrap(), DEFAULT_EIGEN_TOL).unwrap())
    });
}

fn solver_steps(c: &mut Criterion) {
    let grid = Grid2D::periodic_2pi(64).unwrap();
    let params = ModelParams::new(0.01, 0.05, 0.5).unwrap();
    let init = random_initial(&grid, 1e-3, 1);
    for scheme in [Scheme::L1, Scheme::L1h] {
        let mut warm = Solver::new(scheme, params, grid.clone(), init.clone(), SolverOptions::default()).unwrap();
        for _ in 0..20 {
            warm.step(0.01, None).unwrap();
        }
        c.bench_function(&format!("{scheme} step 64^2 after 20 steps"), |b| {
            b.iter_batched(|| warm.clone(), |mut s| s.step(0.01, None).unwrap(), BatchSize::SmallInput)
        });
    }
}

criterion_group!(benches, kernel_tables, eigenvalues, solver_steps);
criterion_main!(benches);
