//! Thin-slab stray-field energy through a spectral demagnetization kernel,
//! plus a brute-force Poisson oracle used to validate it.
//!
//! The geometry is an in-plane periodic slab of thickness `h` with identity
//! deformation and thickness-uniform magnetization. For a single in-plane
//! mode `k` the scaled magnetostatic energy per unit area is
//!
//! ```text
//! e(k) = 1/2 [ N(|k| h) |m3(k)|^2 + (1 - N(|k| h)) |k_hat . m'(k)|^2 ]
//! N(q) = (1 - exp(-q)) / q,   N(0) = 1
//! ```
//!
//! so the total is a sum over the discrete Fourier modes of the cell. The
//! `k = 0` mode carries only the out-of-plane term: a uniform in-plane film
//! has zero demagnetization factor. As `h -> 0` the energy converges to the
//! local limit `1/2 int |zeta_3|^2`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fields::{DirectorField2, Grid2};

/// The finite-thickness film kernel `N(q) = (1 - exp(-q)) / q`, `N(0) = 1`.
pub fn film_kernel(q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else {
        -(-q).exp_m1() / q
    }
}

/// Periodic spectral setup: the duplicated boundary column and row are
/// dropped, and the remaining sample counts must be powers of two.
#[derive(Clone, Copy, Debug)]
pub struct DemagSetup {
    grid: Grid2,
    h: f64,
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

impl DemagSetup {
    pub fn new(grid: Grid2, h: f64) -> Result<DemagSetup> {
        for n in [grid.nx() - 1, grid.ny() - 1] {
            if !is_power_of_two(n) {
                return Err(Error::NonPowerOfTwo { n });
            }
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter {
                what: format!("slab thickness must be positive, got {h}"),
            });
        }
        Ok(DemagSetup { grid, h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }
}

// Check that a node field wraps around: last column equals first column,
// last row equals first row.
fn check_periodic_wrap(zeta: &DirectorField2, grid: &Grid2) -> Result<()> {
    let mut dev: f64 = 0.0;
    let f = zeta.field();
    for j in 0..grid.ny() {
        for c in 0..3 {
            dev = dev.max((f.at(0, j, c) - f.at(grid.nx() - 1, j, c)).abs());
        }
    }
    for i in 0..grid.nx() {
        for c in 0..3 {
            dev = dev.max((f.at(i, 0, c) - f.at(i, grid.ny() - 1, c)).abs());
        }
    }
    if dev > 1e-12 {
        return Err(Error::PeriodicWrap { deviation: dev });
    }
    Ok(())
}

// Forward 2D FFT of one component, normalized by 1 / (mx my) so that the
// output entries are the Fourier-series coefficients.
fn fft2_coefficients(
    values: &[Complex<f64>],
    mx: usize,
    my: usize,
    planner: &mut FftPlanner<f64>,
) -> Vec<Complex<f64>> {
    let mut data = values.to_vec();
    let row_fft = planner.plan_fft_forward(mx);
    for row in data.chunks_mut(mx) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(my);
    let mut col = vec![Complex::default(); my];
    for i in 0..mx {
        for (j, slot) in col.iter_mut().enumerate() {
            *slot = data[j * mx + i];
        }
        col_fft.process(&mut col);
        for (j, &v) in col.iter().enumerate() {
            data[j * mx + i] = v;
        }
    }
    let norm = 1.0 / (mx * my) as f64;
    for v in &mut data {
        *v *= norm;
    }
    data
}

fn wavenumber(index: usize, count: usize, length: f64) -> f64 {
    let signed = if index <= count / 2 {
        index as isize
    } else {
        index as isize - count as isize
    };
    std::f64::consts::TAU * signed as f64 / length
}

/// Scaled magnetostatic energy `(1 / 2h) int |grad psi|^2` of a periodic
/// thickness-uniform slab magnetization, evaluated spectrally.
pub fn slab_demag_energy(zeta: &DirectorField2, grid: &Grid2, h: f64) -> Result<f64> {
    let setup = DemagSetup::new(*grid, h)?;
    if !zeta.field().matches(grid) {
        return Err(Error::GridMismatch {
            what: "slab_demag_energy",
        });
    }
    check_periodic_wrap(zeta, grid)?;

    let mx = grid.nx() - 1;
    let my = grid.ny() - 1;
    let mut m1 = Vec::with_capacity(mx * my);
    let mut m2 = Vec::with_capacity(mx * my);
    let mut m3 = Vec::with_capacity(mx * my);
    for j in 0..my {
        for i in 0..mx {
            let z = zeta.field().node(i, j);
            m1.push(Complex::new(z[0], 0.0));
            m2.push(Complex::new(z[1], 0.0));
            m3.push(Complex::new(z[2], 0.0));
        }
    }
    let mut planner = FftPlanner::new();
    let c1 = fft2_coefficients(&m1, mx, my, &mut planner);
    let c2 = fft2_coefficients(&m2, mx, my, &mut planner);
    let c3 = fft2_coefficients(&m3, mx, my, &mut planner);

    let mut sum = 0.0;
    for q in 0..my {
        let ky = wavenumber(q, my, grid.ly());
        for p in 0..mx {
            let kx = wavenumber(p, mx, grid.lx());
            let idx = q * mx + p;
            let kappa = (kx * kx + ky * ky).sqrt();
            let n = film_kernel(kappa * setup.h());
            sum += n * c3[idx].norm_sqr();
            if kappa > 0.0 {
                let along = (c1[idx] * kx + c2[idx] * ky) / kappa;
                sum += (1.0 - n) * along.norm_sqr();
            }
        }
    }
    Ok(0.5 * grid.area() * sum)
}

/// One row of the dimension-reduction check: scaled film energy against the
/// local limit `1/2 int |zeta_3|^2`.
#[derive(Clone, Copy, Debug)]
pub struct MagnetostaticRow {
    pub h: f64,
    pub film_energy: f64,
    pub limit_energy: f64,
    pub ratio: f64,
}

/// Evaluate the film energy along a decreasing thickness list and report the
/// ratio against the local limit. A vanishing limit (purely in-plane,
/// divergence-free profiles) reports ratio one by convention.
pub fn magnetostatic_limit_check(
    zeta: &DirectorField2,
    grid: &Grid2,
    hs: &[f64],
) -> Result<Vec<MagnetostaticRow>> {
    if hs.is_empty() {
        return Err(Error::InvalidParameter {
            what: "empty thickness list".into(),
        });
    }
    for w in hs.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter {
                what: "thickness list must be strictly decreasing".into(),
            });
        }
    }
    let mut limit = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let z3 = zeta.field().at(i, j, 2);
            limit += 0.5 * grid.quad_weight(i, j) * z3 * z3;
        }
    }
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let film = slab_demag_energy(zeta, grid, h)?;
        let ratio = if limit.abs() < 1e-300 {
            1.0
        } else {
            film / limit
        };
        rows.push(MagnetostaticRow {
            h,
            film_energy: film,
            limit_energy: limit,
            ratio,
        });
    }
    Ok(rows)
}

/// Resolution of the brute-force oracle box.
#[derive(Clone, Copy, Debug)]
pub struct OracleBox {
    /// Vertical extent of the periodic box; the slab sits in the middle.
    pub lz: f64,
    /// Number of vertical cells.
    pub nz: usize,
    /// Relative CG tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OracleBox {
    fn default() -> OracleBox {
        OracleBox {
            lz: 2.0,
            nz: 96,
            tol: 1e-8,
            max_iters: 8000,
        }
    }
}

impl OracleBox {
    /// Box aligned to the slab: the vertical step divides the thickness an
    /// odd number of times, so the charge-carrying faces fall strictly
    /// inside the film and the film boundary sits mid-cell. The requested
    /// extent is rounded up to a whole number of cells.
    pub fn aligned(h: f64, target_lz: f64, cells_across: usize) -> Result<OracleBox> {
        if cells_across % 2 == 0 || cells_across == 0 {
            return Err(Error::InvalidParameter {
                what: format!("cells_across must be odd, got {cells_across}"),
            });
        }
        if !(h > 0.0) || !(target_lz > h) {
            return Err(Error::InvalidParameter {
                what: format!("oracle box needs 0 < h < lz, got h = {h}, lz = {target_lz}"),
            });
        }
        let dz = h / cells_across as f64;
        let mut nz = (target_lz / dz).ceil() as usize;
        if nz % 2 == 1 {
            nz += 1;
        }
        Ok(OracleBox {
            lz: dz * nz as f64,
            nz,
            tol: 1e-8,
            max_iters: 20000,
        })
    }
}

/// Brute-force finite-difference evaluation of the scaled magnetostatic
/// energy on a padded periodic 3D box: solve the potential equation
/// `lap psi = div (chi m)` with a 7-point stencil and face-sampled sources,
/// then return `(1 / 2h) int |grad psi|^2`.
///
/// Used only in tests and the verification harness to validate
/// [`slab_demag_energy`] within discretization error; the additive gauge is
/// fixed by the zero-mean convention.
pub fn poisson_oracle(
    zeta: &DirectorField2,
    grid: &Grid2,
    h: f64,
    bx: &OracleBox,
) -> Result<f64> {
    DemagSetup::new(*grid, h)?;
    check_periodic_wrap(zeta, grid)?;
    let mx = grid.nx() - 1;
    let my = grid.ny() - 1;
    let nz = bx.nz;
    let (dx, dy, dz) = (grid.dx(), grid.dy(), bx.lz / nz as f64);
    let n_total = mx * my * nz;
    let idx = |i: usize, j: usize, k: usize| (k * my + j) * mx + i;

    // Face-sampled source components of chi m. Node z-levels sit at cell
    // centers z_k = -lz/2 + (k + 1/2) dz so film boundaries fall between
    // samples for generic thickness.
    let zc = |k: usize| -0.5 * bx.lz + (k as f64 + 0.5) * dz;
    let chi_node = |z: f64| -> f64 {
        if z.abs() < 0.5 * h - 1e-14 {
            1.0
        } else if (z.abs() - 0.5 * h).abs() <= 1e-14 {
            0.5
        } else {
            0.0
        }
    };

    // chi m on x-faces (between i and i+1), y-faces, z-faces.
    let mut sx = vec![0.0; n_total];
    let mut sy = vec![0.0; n_total];
    let mut sz = vec![0.0; n_total];
    for k in 0..nz {
        let chi_xy = chi_node(zc(k));
        // z-face between k and k+1 sits at height zc(k) + dz/2.
        let zface = zc(k) + 0.5 * dz;
        let chi_z = chi_node(zface);
        for j in 0..my {
            for i in 0..mx {
                let z = zeta.field().node(i, j);
                let zxp = zeta.field().node((i + 1) % mx, j);
                let zyp = zeta.field().node(i, (j + 1) % my);
                sx[idx(i, j, k)] = chi_xy * 0.5 * (z[0] + zxp[0]);
                sy[idx(i, j, k)] = chi_xy * 0.5 * (z[1] + zyp[1]);
                sz[idx(i, j, k)] = chi_z * z[2];
            }
        }
    }

    // rhs = div_face(s); periodic wrap in all three directions.
    let mut rhs = vec![0.0; n_total];
    for k in 0..nz {
        let km = (k + nz - 1) % nz;
        for j in 0..my {
            let jm = (j + my - 1) % my;
            for i in 0..mx {
                let im = (i + mx - 1) % mx;
                rhs[idx(i, j, k)] = (sx[idx(i, j, k)] - sx[idx(im, j, k)]) / dx
                    + (sy[idx(i, j, k)] - sy[idx(i, jm, k)]) / dy
                    + (sz[idx(i, j, k)] - sz[idx(i, j, km)]) / dz;
            }
        }
    }
    // Project out the constant null space (gauge: zero mean).
    let project = |v: &mut [f64]| {
        let mean: f64 = v.iter().sum::<f64>() / v.len() as f64;
        for x in v.iter_mut() {
            *x -= mean;
        }
    };
    project(&mut rhs);

    let lap = |psi: &[f64], out: &mut [f64]| {
        let (cx, cy, cz) = (1.0 / (dx * dx), 1.0 / (dy * dy), 1.0 / (dz * dz));
        for k in 0..nz {
            let kp = (k + 1) % nz;
            let km = (k + nz - 1) % nz;
            for j in 0..my {
                let jp = (j + 1) % my;
                let jm = (j + my - 1) % my;
                for i in 0..mx {
                    let ip = (i + 1) % mx;
                    let im = (i + mx - 1) % mx;
                    let c = psi[idx(i, j, k)];
                    out[idx(i, j, k)] = cx * (psi[idx(ip, j, k)] - 2.0 * c + psi[idx(im, j, k)])
                        + cy * (psi[idx(i, jp, k)] - 2.0 * c + psi[idx(i, jm, k)])
                        + cz * (psi[idx(i, j, kp)] - 2.0 * c + psi[idx(i, j, km)]);
                }
            }
        }
    };

    // CG on -lap psi = -rhs (SPD on the zero-mean subspace).
    let mut psi = vec![0.0; n_total];
    let mut r: Vec<f64> = rhs.iter().map(|v| -v).collect();
    project(&mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n_total];
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut rs = dot(&r, &r);
    let target = bx.tol * rs.sqrt().max(1e-300);
    let mut converged = rs.sqrt() <= target;
    for _ in 0..bx.max_iters {
        if rs.sqrt() <= target {
            converged = true;
            break;
        }
        lap(&p, &mut ap);
        for v in ap.iter_mut() {
            *v = -*v;
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for (x, pv) in psi.iter_mut().zip(&p) {
            *x += alpha * pv;
        }
        for (rv, av) in r.iter_mut().zip(&ap) {
            *rv -= alpha * av;
        }
        project(&mut r);
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for (pv, rv) in p.iter_mut().zip(&r) {
            *pv = rv + beta * *pv;
        }
        rs = rs_new;
    }
    if !converged {
        return Err(Error::SolverDiverged {
            what: "poisson oracle conjugate gradients",
            residual: rs.sqrt(),
        });
    }

    // Energy from face gradients.
    let mut energy = 0.0;
    let cell = dx * dy * dz;
    for k in 0..nz {
        let kp = (k + 1) % nz;
        for j in 0..my {
            let jp = (j + 1) % my;
            for i in 0..mx {
                let ip = (i + 1) % mx;
                let c = psi[idx(i, j, k)];
                let gx = (psi[idx(ip, j, k)] - c) / dx;
                let gy = (psi[idx(i, jp, k)] - c) / dy;
                let gz = (psi[idx(i, j, kp)] - c) / dz;
                energy += cell * (gx * gx + gy * gy + gz * gz);
            }
        }
    }
    Ok(energy / (2.0 * h))
}

/// Built-in magnetization profiles for the verification harness.
pub fn sample_profile(name: &str, grid: &Grid2) -> Result<DirectorField2> {
    use crate::fields::Field2;
    match name {
        "e3" => DirectorField2::constant(grid, [0.0, 0.0, 1.0]),
        "e1" => DirectorField2::constant(grid, [1.0, 0.0, 0.0]),
        // Out-of-plane cosine with the in-plane complement chosen
        // divergence-free, so only the surface-charge channel is active.
        "cos_mode" => {
            let f = Field2::from_fn(grid, 3, |x, _, out| {
                let t = std::f64::consts::TAU * x;
                out[0] = 0.0;
                out[1] = t.sin();
                out[2] = t.cos();
            });
            DirectorField2::new(f)
        }
        other => Err(Error::InvalidParameter {
            what: format!("unknown magnetization profile `{other}`"),
        }),
    }
}
