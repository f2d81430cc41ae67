//! The executable invariant suite behind the `check` subcommand.
//!
//! Each entry exercises one documented invariant at desk scale and prints a
//! single ok / FAIL line; any failure makes the process exit nonzero.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use magnetoplate_core::bulk::{bulk_elastic, gamma_table, AnsatzSpec};
use magnetoplate_core::fields::{integrate2, project_sphere};
use magnetoplate_core::linalg::{sqrt_spd3, Mat3};
use magnetoplate_core::magnetostatics::{film_kernel, sample_profile, slab_demag_energy};
use magnetoplate_core::material::{
    optimal_shift_via_system, phi, q_phi, q_phi_red, w_h,
};
use magnetoplate_core::reduced::{
    dissipation_d0, gradient_f0, total_f0, LoadSchedule, ReducedState,
};
use magnetoplate_core::static_solver::{minimize_f0, random_director, SolveOptions};
use magnetoplate_core::{Field2, Grid2, Grid3, Material};

use crate::config::RunConfig;
use crate::runner::{EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK};

struct Checker {
    failures: usize,
}

impl Checker {
    fn run(&mut self, name: &str, ok: bool, detail: &str) {
        if ok {
            println!("check {name}: ok");
        } else {
            self.failures += 1;
            println!("check {name}: FAIL ({detail})");
        }
    }
}

fn sym_random(rng: &mut StdRng, scale: f64) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = rng.gen_range(-scale..scale);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Mat3(m)
}

pub fn run_check(cfg: &mut RunConfig, _out: &Path) -> i32 {
    let material = match cfg.material() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let seed = match cfg.seed() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut rng = StdRng::seed_from_u64(seed);
    let mut c = Checker { failures: 0 };

    // Quadrature exactness on the hand-computed example.
    {
        let g = Grid2::unit_square(5).unwrap();
        let f = Field2::from_fn(&g, 1, |x, _, out| out[0] = x * x);
        let v = integrate2(&f, &g).unwrap();
        c.run(
            "quadrature-x-squared",
            (v - 0.34375).abs() < 1e-15,
            &format!("{v}"),
        );
    }

    // Sphere projection idempotency.
    {
        let g = Grid2::unit_square(7).unwrap();
        let raw = Field2::from_fn(&g, 3, |x, y, out| {
            out[0] = 1.0 + x;
            out[1] = y - 0.4;
            out[2] = 0.5;
        });
        let once = project_sphere(&raw).unwrap();
        let twice = project_sphere(once.field()).unwrap();
        let dev = once
            .as_slice()
            .iter()
            .zip(twice.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        c.run("sphere-projection-idempotent", dev <= 1e-15, &format!("{dev:e}"));
    }

    // Closed-form reduced quadratic form against the linear-system route.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mu = rng.gen_range(0.2..3.0);
            let lambda = rng.gen_range(-0.3 * mu..3.0);
            let m = Material::new(mu, lambda, 1.0, 4.0, 8.0).unwrap();
            let xi = [
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            ];
            let sym = [
                [xi[0][0], 0.5 * (xi[0][1] + xi[1][0])],
                [0.5 * (xi[0][1] + xi[1][0]), xi[1][1]],
            ];
            let b = Mat3([
                [sym[0][0], sym[0][1], 0.0],
                [sym[1][0], sym[1][1], 0.0],
                [0.0, 0.0, 0.0],
            ]);
            let (_, v_num) = optimal_shift_via_system(&b, &m).unwrap();
            let v_closed = q_phi_red(xi, &m);
            worst = worst.max((v_closed - v_num).abs() / v_closed.max(1.0));
        }
        c.run("reduced-form-two-routes", worst <= 1e-10, &format!("{worst:e}"));
    }

    // Density well, frame indifference, parity.
    {
        let mut ok = true;
        let mut detail = String::new();
        for &h in &[1.0, 0.5, 0.1] {
            let s = material.strain_scale(h);
            let f = Mat3::diag(1.0, 1.0, 1.0 + s);
            let v = w_h(&f, [0.0, 0.0, 1.0], h, &material).unwrap();
            if v.abs() > 1e-12 {
                ok = false;
                detail = format!("well at h = {h}: {v:e}");
            }
        }
        for _ in 0..50 {
            let f = sym_random(&mut rng, 0.3).add(&Mat3::identity());
            if f.det() <= 0.05 {
                continue;
            }
            let lam = {
                let v = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0f64),
                ];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(0.3);
                [v[0] / n, v[1] / n, v[2] / n]
            };
            if (lam[0] * lam[0] + lam[1] * lam[1] + lam[2] * lam[2] - 1.0).abs() > 1e-12 {
                continue;
            }
            let h = rng.gen_range(0.05..1.0);
            let base = w_h(&f, lam, h, &material).unwrap();
            let flip = w_h(&f, [-lam[0], -lam[1], -lam[2]], h, &material).unwrap();
            if flip != base {
                ok = false;
                detail = "parity violated".into();
            }
        }
        c.run("density-well-and-parity", ok, &detail);
    }

    // Taylor consistency of the quadratic form.
    {
        let mut ok = true;
        for _ in 0..10 {
            let y = sym_random(&mut rng, 1.0);
            let q = q_phi(&y, &material);
            let mut prev = f64::INFINITY;
            for &eps in &[1e-2, 5e-3, 2.5e-3] {
                let p = phi(&Mat3::identity().add(&y.scale(eps)), &material).unwrap();
                let e = (2.0 * p / (eps * eps) - q).abs();
                if e > 0.75 * prev.max(1e-9) {
                    ok = false;
                }
                prev = e;
            }
        }
        c.run("taylor-consistency", ok, "");
    }

    // Dissipation metric axioms.
    {
        let g = Grid2::unit_square(7).unwrap();
        let mut ok = true;
        for _ in 0..100 {
            let z1 = random_director(&g, &mut rng).unwrap();
            let z2 = random_director(&g, &mut rng).unwrap();
            let z3 = random_director(&g, &mut rng).unwrap();
            let d12 = dissipation_d0(&z1, &z2, &g).unwrap();
            let d21 = dissipation_d0(&z2, &z1, &g).unwrap();
            let d11 = dissipation_d0(&z1, &z1, &g).unwrap();
            let d13 = dissipation_d0(&z1, &z3, &g).unwrap();
            let d32 = dissipation_d0(&z3, &z2, &g).unwrap();
            if d12 != d21 || d11 != 0.0 || d12 > d13 + d32 + 1e-12 {
                ok = false;
            }
        }
        c.run("dissipation-metric", ok, "");
    }

    // Film kernel limits and monotonicity.
    {
        let mut ok = film_kernel(0.0) == 1.0 && film_kernel(300.0) < 1e-2;
        let mut prev = 1.0 + 1e-16;
        for k in 0..200 {
            let n = film_kernel(k as f64 * 0.1);
            if n > prev {
                ok = false;
            }
            prev = n;
        }
        c.run("film-kernel", ok, "");
    }

    // Spectral exactness of the single-mode profile.
    {
        let g = Grid2::unit_square(33).unwrap();
        let z = sample_profile("cos_mode", &g).unwrap();
        let h = 0.05;
        let e = slab_demag_energy(&z, &g, h).unwrap();
        let expected = 0.5 * film_kernel(std::f64::consts::TAU * h) * 0.5;
        c.run(
            "single-mode-spectral",
            (e - expected).abs() <= 1e-12 * expected,
            &format!("{e} vs {expected}"),
        );
    }

    // Exact zero of the trivial recovery profile.
    {
        let g3 = Grid3::new(Grid2::unit_square(5).unwrap(), 5).unwrap();
        let spec = AnsatzSpec::by_name("zero_e3", material).unwrap();
        let mut ok = true;
        for &h in &[0.2, 0.1, 0.05, 0.025] {
            if bulk_elastic(&spec, h, &g3).unwrap() != 0.0 {
                ok = false;
            }
        }
        c.run("recovery-well-exact-zero", ok, "");
    }

    // Gamma gap decreases for the generic profile (coarse and quick).
    {
        let g3 = Grid3::new(Grid2::unit_square(9).unwrap(), 5).unwrap();
        let spec = AnsatzSpec::by_name("generic", material).unwrap();
        let rows = gamma_table(&spec, &[0.2, 0.1, 0.05], &g3).unwrap();
        let ok = rows.windows(2).all(|w| w[1].gap < w[0].gap);
        c.run("gamma-gap-decreasing", ok, "");
    }

    // Analytic gradient against central differences on one random state.
    {
        let g = Grid2::unit_square(8).unwrap();
        let sched = LoadSchedule::zero(&g, 1.0);
        let zeta = random_director(&g, &mut rng).unwrap();
        let state = ReducedState {
            u: Field2::zeros(&g, 2),
            v: Field2::zeros(&g, 1),
            zeta,
        };
        let grad = gradient_f0(0.5, &state, &sched, &g, &material).unwrap();
        // Probe a handful of interior nodes by symmetric differences.
        let mut worst: f64 = 0.0;
        for (i, j) in [(2, 3), (4, 4), (5, 2)] {
            for comp in 0..3 {
                let eps = 1e-6;
                let mut plus = state.zeta.field().clone();
                plus.node_mut(i, j)[comp] += eps;
                let mut minus = state.zeta.field().clone();
                minus.node_mut(i, j)[comp] -= eps;
                let sp = ReducedState {
                    u: state.u.clone(),
                    v: state.v.clone(),
                    zeta: project_sphere(&plus).unwrap(),
                };
                let sm = ReducedState {
                    u: state.u.clone(),
                    v: state.v.clone(),
                    zeta: project_sphere(&minus).unwrap(),
                };
                let fd = (total_f0(0.5, &sp, &sched, &g, &material).unwrap()
                    - total_f0(0.5, &sm, &sched, &g, &material).unwrap())
                    / (2.0 * eps);
                let an = grad.gz.node(i, j)[comp];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-4));
            }
        }
        c.run("gradient-finite-difference", worst <= 1e-4, &format!("{worst:e}"));
    }

    // Deterministic tiny solve.
    {
        let g = Grid2::unit_square(8).unwrap();
        let sched = LoadSchedule::zero(&g, 1.0);
        let opts = SolveOptions {
            max_outer_iters: 10,
            ..SolveOptions::default()
        };
        let start = ReducedState::flat(&g, [1.0, 0.0, 0.5]).unwrap();
        let (s1, _) = minimize_f0(&start, 0.0, &sched, &g, &material, &opts).unwrap();
        let (s2, _) = minimize_f0(&start, 0.0, &sched, &g, &material, &opts).unwrap();
        c.run(
            "solver-deterministic",
            s1.zeta.field().as_slice() == s2.zeta.field().as_slice(),
            "",
        );
    }

    // The public square root stays consistent with its defining identity.
    {
        let mut ok = true;
        for _ in 0..50 {
            let f = sym_random(&mut rng, 1.0).add(&Mat3::identity().scale(2.0));
            if let Ok(s) = sqrt_spd3(&f) {
                if s.mul(&s).sub(&f).norm() > 1e-11 * f.norm().max(1.0) {
                    ok = false;
                }
            }
        }
        c.run("matrix-square-root", ok, "");
    }

    println!(
        "check suite: {} failures",
        c.failures
    );
    if c.failures == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
