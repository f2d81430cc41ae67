use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use magnetoplate_core::bulk::{bulk_elastic, AnsatzSpec};
use magnetoplate_core::linalg::{sqrt_spd3, Mat3};
use magnetoplate_core::magnetostatics::{sample_profile, slab_demag_energy};
use magnetoplate_core::material::w_h;
use magnetoplate_core::reduced::{energy_e0, gradient_f0, LoadSchedule, ReducedState};
use magnetoplate_core::static_solver::{minimize_f0, SolveOptions};
use magnetoplate_core::{Grid2, Grid3, Material};

fn bench_matrix_kernels(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(1);
    let mut m = [[0.0; 3]; 3];
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.gen_range(-0.4..0.4);
        }
    }
    let f = Mat3(m).add(&Mat3::identity());
    let a = f.transpose().mul(&f);
    let mat = Material::default();

    c.bench_function("sqrt_spd3", |b| {
        b.iter(|| sqrt_spd3(black_box(&a)).unwrap())
    });
    c.bench_function("w_h", |b| {
        b.iter(|| w_h(black_box(&f), [0.6, 0.0, 0.8], 0.1, &mat).unwrap())
    });
}

fn bench_reduced_energy(c: &mut Criterion) {
    let grid = Grid2::unit_square(33).unwrap();
    let mat = Material::default();
    let state = ReducedState::flat(&grid, [1.0, 0.0, 2.0]).unwrap();
    let sched = LoadSchedule::zero(&grid, 1.0);

    c.bench_function("energy_e0_33x33", |b| {
        b.iter(|| energy_e0(black_box(&state), &grid, &mat).unwrap())
    });
    c.bench_function("gradient_f0_33x33", |b| {
        b.iter(|| gradient_f0(0.5, black_box(&state), &sched, &grid, &mat).unwrap())
    });
}

fn bench_demag_kernel(c: &mut Criterion) {
    let grid = Grid2::new(65, 65, 1.0, 1.0).unwrap();
    let zeta = sample_profile("cos_mode", &grid).unwrap();
    c.bench_function("slab_demag_64x64", |b| {
        b.iter(|| slab_demag_energy(black_box(&zeta), &grid, 0.05).unwrap())
    });
}

fn bench_bulk_elastic(c: &mut Criterion) {
    let grid = Grid3::new(Grid2::unit_square(17).unwrap(), 5).unwrap();
    let spec = AnsatzSpec::by_name("generic", Material::default()).unwrap();
    c.bench_function("bulk_elastic_17x17x5", |b| {
        b.iter(|| bulk_elastic(black_box(&spec), 0.1, &grid).unwrap())
    });
}

fn bench_static_solve(c: &mut Criterion) {
    let grid = Grid2::unit_square(9).unwrap();
    let mat = Material::default();
    let sched = LoadSchedule::zero(&grid, 1.0);
    let start = ReducedState::flat(&grid, [1.0, 0.0, 0.3]).unwrap();
    let opts = SolveOptions {
        max_outer_iters: 5,
        ..SolveOptions::default()
    };
    c.bench_function("minimize_f0_9x9_5iters", |b| {
        b.iter(|| minimize_f0(black_box(&start), 0.0, &sched, &grid, &mat, &opts).unwrap())
    });
}

criterion_group!(
    kernels,
    bench_matrix_kernels,
    bench_reduced_energy,
    bench_demag_kernel,
    bench_bulk_elastic,
    bench_static_solve
);
criterion_main!(kernels);
