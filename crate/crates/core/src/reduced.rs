//! The reduced plate model on the section grid: energy, loads, total energy,
//! power, dissipation, and the analytic first variation.
//!
//! A reduced state is a triple `(u, v, zeta)` of in-plane displacement,
//! deflection, and unit director field. The energy is
//!
//! ```text
//! E0 = 1/2 int Q_red(sym grad u - zeta' ⊗ zeta')     (membrane)
//!    + 1/24 int Q_red(hess v)                        (bending)
//!    + int |grad zeta|^2                             (exchange)
//!    + 1/2 int |zeta_3|^2                            (magnetostatic)
//! ```
//!
//! with clamped conditions: `u = v = 0` on the boundary and the discrete
//! normal derivative of `v` vanishing there through the mirrored ghost
//! convention of [`crate::fields::hessian2`].

use crate::error::{Error, Result};
use crate::fields::{
    grad2, grad2_adjoint, hessian2, hessian2_adjoint, DirectorField2, Field2, Grid2,
};
use crate::linalg::Mat2;
use crate::material::{q_phi_red, q_phi_red_gradient, Material};

/// Clamped reduced state `(u, v, zeta)`.
#[derive(Clone, Debug)]
pub struct ReducedState {
    pub u: Field2,
    pub v: Field2,
    pub zeta: DirectorField2,
}

impl ReducedState {
    pub fn new(u: Field2, v: Field2, zeta: DirectorField2, grid: &Grid2) -> Result<ReducedState> {
        if !u.matches(grid) || !v.matches(grid) || !zeta.field().matches(grid) {
            return Err(Error::GridMismatch {
                what: "reduced state",
            });
        }
        if u.d() != 2 {
            return Err(Error::DimensionMismatch {
                what: "reduced state u",
                expected: 2,
                got: u.d(),
            });
        }
        if v.d() != 1 {
            return Err(Error::DimensionMismatch {
                what: "reduced state v",
                expected: 1,
                got: v.d(),
            });
        }
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidParameter {
                what: "reduced state has non-finite entries".into(),
            });
        }
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                if grid.is_boundary(i, j) {
                    let uv = u.node(i, j);
                    if uv[0].abs() > 1e-12 || uv[1].abs() > 1e-12 || v.at(i, j, 0).abs() > 1e-12 {
                        return Err(Error::InvalidParameter {
                            what: format!("clamped state has nonzero boundary values at ({i}, {j})"),
                        });
                    }
                }
            }
        }
        Ok(ReducedState { u, v, zeta })
    }

    /// Zero displacements with a constant director.
    pub fn flat(grid: &Grid2, direction: [f64; 3]) -> Result<ReducedState> {
        Ok(ReducedState {
            u: Field2::zeros(grid, 2),
            v: Field2::zeros(grid, 1),
            zeta: DirectorField2::constant(grid, direction)?,
        })
    }
}

/// Per-term breakdown of the reduced energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub membrane: f64,
    pub bending: f64,
    pub exchange: f64,
    pub magnetostatic: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.membrane + self.bending + self.exchange + self.magnetostatic
    }
}

/// Applied loads at one time: in-plane force, vertical force, magnetic field.
#[derive(Clone, Debug)]
pub struct Loads {
    pub f: Field2,
    pub g: Field2,
    pub hfield: Field2,
}

impl Loads {
    pub fn zero(grid: &Grid2) -> Loads {
        Loads {
            f: Field2::zeros(grid, 2),
            g: Field2::zeros(grid, 1),
            hfield: Field2::zeros(grid, 3),
        }
    }

    pub fn validate(&self, grid: &Grid2) -> Result<()> {
        if !self.f.matches(grid) || !self.g.matches(grid) || !self.hfield.matches(grid) {
            return Err(Error::GridMismatch { what: "loads" });
        }
        if self.f.d() != 2 || self.g.d() != 1 || self.hfield.d() != 3 {
            return Err(Error::DimensionMismatch {
                what: "loads components",
                expected: 2,
                got: self.f.d(),
            });
        }
        if !self.f.is_finite() || !self.g.is_finite() || !self.hfield.is_finite() {
            return Err(Error::InvalidParameter {
                what: "loads have non-finite entries".into(),
            });
        }
        Ok(())
    }

    fn lin_comb(a: &Loads, wa: f64, b: &Loads, wb: f64) -> Loads {
        let comb = |x: &Field2, y: &Field2| {
            let mut out = x.scaled(wa);
            for (o, v) in out.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *o += wb * v;
            }
            out
        };
        Loads {
            f: comb(&a.f, &b.f),
            g: comb(&a.g, &b.g),
            hfield: comb(&a.hfield, &b.hfield),
        }
    }
}

/// Time-dependent loads: piecewise linear between strictly increasing sample
/// times, with piecewise-constant time derivative (right-continuous at the
/// knots).
#[derive(Clone, Debug)]
pub struct LoadSchedule {
    times: Vec<f64>,
    samples: Vec<Loads>,
}

impl LoadSchedule {
    pub fn new(times: Vec<f64>, samples: Vec<Loads>, grid: &Grid2) -> Result<LoadSchedule> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter {
                what: "load schedule needs at least two samples".into(),
            });
        }
        if times.len() != samples.len() {
            return Err(Error::InvalidParameter {
                what: format!(
                    "load schedule has {} times but {} samples",
                    times.len(),
                    samples.len()
                ),
            });
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter {
                    what: format!(
                        "schedule times not strictly increasing: {} then {}",
                        w[0], w[1]
                    ),
                });
            }
        }
        for s in &samples {
            s.validate(grid)?;
        }
        Ok(LoadSchedule { times, samples })
    }

    /// Constant-in-time loads on `[0, t_end]`.
    pub fn constant(loads: Loads, t_end: f64, grid: &Grid2) -> Result<LoadSchedule> {
        LoadSchedule::new(vec![0.0, t_end], vec![loads.clone(), loads], grid)
    }

    pub fn zero(grid: &Grid2, t_end: f64) -> LoadSchedule {
        LoadSchedule {
            times: vec![0.0, t_end],
            samples: vec![Loads::zero(grid), Loads::zero(grid)],
        }
    }

    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.times
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if t < self.t_first() - 1e-12 || t > self.t_last() + 1e-12 {
            return Err(Error::TimeOutOfRange {
                t,
                t_first: self.t_first(),
                t_last: self.t_last(),
            });
        }
        Ok(())
    }

    // Index of the interval [t_i, t_{i+1}) containing t; the last interval
    // is closed on the right.
    fn interval(&self, t: f64) -> usize {
        let n = self.times.len();
        let mut k = 0;
        while k + 2 < n && t >= self.times[k + 1] {
            k += 1;
        }
        k
    }

    /// Loads at time `t` by linear interpolation.
    pub fn loads_at(&self, t: f64) -> Result<Loads> {
        self.check_range(t)?;
        let k = self.interval(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(Loads::lin_comb(
            &self.samples[k],
            1.0 - w,
            &self.samples[k + 1],
            w,
        ))
    }

    /// Load rates at time `t` (right derivative at knots).
    pub fn rates_at(&self, t: f64) -> Result<Loads> {
        self.check_range(t)?;
        let k = self.interval(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let inv = 1.0 / (t1 - t0);
        Ok(Loads::lin_comb(
            &self.samples[k + 1],
            inv,
            &self.samples[k],
            -inv,
        ))
    }

    /// L2 norms of the load rates at time `t`: the computable surrogate for
    /// the load-rate envelope of the a-priori estimates.
    pub fn rate_norms(&self, t: f64, grid: &Grid2) -> Result<f64> {
        let rates = self.rates_at(t)?;
        let l2 = |f: &Field2| -> f64 {
            let mut sum = 0.0;
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    let w = grid.quad_weight(i, j);
                    for v in f.node(i, j) {
                        sum += w * v * v;
                    }
                }
            }
            sum.sqrt()
        };
        Ok(l2(&rates.f) + l2(&rates.g) + l2(&rates.hfield))
    }
}

fn quad_dot(a: &Field2, b: &Field2, grid: &Grid2) -> f64 {
    debug_assert_eq!(a.d(), b.d());
    let d = a.d();
    let mut sum = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let av = a.node(i, j);
            let bv = b.node(i, j);
            let mut dot = 0.0;
            for c in 0..d {
                dot += av[c] * bv[c];
            }
            sum += w * dot;
        }
    }
    sum
}

// Membrane strain at one node: sym grad u - zeta' ⊗ zeta'.
fn membrane_strain(gu: &[f64], z: &[f64]) -> Mat2 {
    [
        [gu[0] - z[0] * z[0], 0.5 * (gu[1] + gu[2]) - z[0] * z[1]],
        [0.5 * (gu[1] + gu[2]) - z[0] * z[1], gu[3] - z[1] * z[1]],
    ]
}

/// Reduced energy with per-term breakdown.
pub fn energy_e0(state: &ReducedState, grid: &Grid2, mat: &Material) -> Result<EnergyBreakdown> {
    if !state.u.matches(grid) {
        return Err(Error::GridMismatch { what: "energy_e0" });
    }
    let gu = grad2(&state.u, grid)?;
    let hv = hessian2(&state.v, grid)?;
    let gz = grad2(state.zeta.field(), grid)?;

    let mut out = EnergyBreakdown::default();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let z = state.zeta.field().node(i, j);

            let xi = membrane_strain(gu.node(i, j), z);
            out.membrane += 0.5 * w * q_phi_red(xi, mat);

            let h = hv.node(i, j);
            let hm = [[h[0], h[1]], [h[2], h[3]]];
            out.bending += w / 24.0 * q_phi_red(hm, mat);

            let gzn = gz.node(i, j);
            let mut exch = 0.0;
            for v in gzn {
                exch += v * v;
            }
            out.exchange += w * exch;

            out.magnetostatic += 0.5 * w * z[2] * z[2];
        }
    }
    Ok(out)
}

/// Work of the applied loads against a state.
pub fn work_l0(loads: &Loads, state: &ReducedState, grid: &Grid2) -> Result<f64> {
    loads.validate(grid)?;
    if !state.u.matches(grid) {
        return Err(Error::GridMismatch { what: "work_l0" });
    }
    Ok(quad_dot(&loads.f, &state.u, grid)
        + quad_dot(&loads.g, &state.v, grid)
        + quad_dot(&loads.hfield, state.zeta.field(), grid))
}

/// Total energy `F0(t, q) = E0(q) - L0(t, q)`.
pub fn total_f0(
    t: f64,
    state: &ReducedState,
    schedule: &LoadSchedule,
    grid: &Grid2,
    mat: &Material,
) -> Result<f64> {
    let loads = schedule.loads_at(t)?;
    Ok(energy_e0(state, grid, mat)?.total() - work_l0(&loads, state, grid)?)
}

/// Partial time derivative of the total energy at fixed state:
/// `-int df/dt . u - int dg/dt v - int dh/dt . zeta`.
pub fn power_dt_f0(
    t: f64,
    state: &ReducedState,
    schedule: &LoadSchedule,
    grid: &Grid2,
) -> Result<f64> {
    let rates = schedule.rates_at(t)?;
    Ok(-work_l0(&rates, state, grid)?)
}

/// Exact integral of [`power_dt_f0`] over `[t0, t1]` at fixed state.
///
/// Piecewise-linear loads make the rate piecewise constant, so the integral
/// is an exact sum of rate x length over the schedule sub-intervals.
pub fn power_integral(
    state: &ReducedState,
    t0: f64,
    t1: f64,
    schedule: &LoadSchedule,
    grid: &Grid2,
) -> Result<f64> {
    if t1 < t0 {
        return Ok(-power_integral(state, t1, t0, schedule, grid)?);
    }
    schedule.check_range(t0)?;
    schedule.check_range(t1)?;
    let mut cuts = vec![t0];
    for &k in schedule.knots() {
        if k > t0 && k < t1 {
            cuts.push(k);
        }
    }
    cuts.push(t1);
    let mut sum = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let mid = 0.5 * (w[0] + w[1]);
            sum += power_dt_f0(mid, state, schedule, grid)? * (w[1] - w[0]);
        }
    }
    Ok(sum)
}

/// Dissipation distance `D0(z1, z2) = int |z1 - z2|` (node-wise Euclidean
/// norm, then quadrature).
pub fn dissipation_d0(z1: &DirectorField2, z2: &DirectorField2, grid: &Grid2) -> Result<f64> {
    if !z1.field().matches(grid) || !z2.field().matches(grid) {
        return Err(Error::GridMismatch {
            what: "dissipation_d0",
        });
    }
    let mut sum = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let a = z1.field().node(i, j);
            let b = z2.field().node(i, j);
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            let dz = a[2] - b[2];
            sum += grid.quad_weight(i, j) * (dx * dx + dy * dy + dz * dz).sqrt();
        }
    }
    Ok(sum)
}

/// Total variation of a piecewise-constant director trace over an index
/// window: the supremum over partitions is attained by summing consecutive
/// increments.
pub fn var_d0(
    trace: &[DirectorField2],
    window: std::ops::Range<usize>,
    grid: &Grid2,
) -> Result<f64> {
    if window.is_empty() || window.end > trace.len() {
        return Err(Error::EmptyWindow);
    }
    let mut sum = 0.0;
    for i in window.start..window.end - 1 {
        sum += dissipation_d0(&trace[i], &trace[i + 1], grid)?;
    }
    Ok(sum)
}

/// The discrete gradient of the total energy with respect to node values.
#[derive(Clone, Debug)]
pub struct StateGradient {
    /// Gradient in `u`; zeroed on clamped boundary rows.
    pub gu: Field2,
    /// Gradient in `v`; zeroed on clamped boundary rows.
    pub gv: Field2,
    /// Riemannian gradient in `zeta`: projected per node onto the tangent
    /// plane of the sphere.
    pub gz: Field2,
}

impl StateGradient {
    pub fn sup_norm(&self) -> f64 {
        self.gu
            .max_abs()
            .max(self.gv.max_abs())
            .max(self.gz.max_abs())
    }
}

pub(crate) fn zero_boundary(field: &mut Field2, grid: &Grid2) {
    let d = field.d();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if grid.is_boundary(i, j) {
                for c in 0..d {
                    field.node_mut(i, j)[c] = 0.0;
                }
            }
        }
    }
}

pub(crate) fn project_tangent(gz: &mut Field2, zeta: &DirectorField2) {
    for node in 0..gz.node_count() {
        let z_all = zeta.field().as_slice();
        let z = [z_all[node * 3], z_all[node * 3 + 1], z_all[node * 3 + 2]];
        let g = &mut gz.as_mut_slice()[node * 3..node * 3 + 3];
        let dot = g[0] * z[0] + g[1] * z[1] + g[2] * z[2];
        g[0] -= dot * z[0];
        g[1] -= dot * z[1];
        g[2] -= dot * z[2];
    }
}

// Shared assembly: gradients of E0 - L0 with respect to (u, v, zeta) node
// values, before boundary pinning and tangent projection.
fn gradient_raw(
    state: &ReducedState,
    loads: &Loads,
    grid: &Grid2,
    mat: &Material,
) -> Result<(Field2, Field2, Field2)> {
    let gu_field = grad2(&state.u, grid)?;
    let hv = hessian2(&state.v, grid)?;
    let gz_field = grad2(state.zeta.field(), grid)?;

    // Membrane: weights for the grad2 adjoint plus the zeta chain term.
    let mut mem_weights = Field2::zeros(grid, 4);
    let mut gz_out = Field2::zeros(grid, 3);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let z = state.zeta.field().node(i, j);
            let z = [z[0], z[1], z[2]];
            let xi = membrane_strain(gu_field.node(i, j), &z);
            let dq = q_phi_red_gradient(xi, mat);
            let mw = mem_weights.node_mut(i, j);
            mw[0] = 0.5 * w * dq[0][0];
            mw[1] = 0.5 * w * dq[0][1];
            mw[2] = 0.5 * w * dq[1][0];
            mw[3] = 0.5 * w * dq[1][1];
            let gzo = gz_out.node_mut(i, j);
            let dq_sym_off = 0.5 * (dq[0][1] + dq[1][0]);
            gzo[0] = -w * (dq[0][0] * z[0] + dq_sym_off * z[1]);
            gzo[1] = -w * (dq[1][1] * z[1] + dq_sym_off * z[0]);
            gzo[2] = 0.0;
        }
    }
    let mut gu_out = grad2_adjoint(&mem_weights, grid)?;

    // Bending.
    let mut bend_weights = Field2::zeros(grid, 4);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let h = hv.node(i, j);
            let hm = [[h[0], h[1]], [h[2], h[3]]];
            let dq = q_phi_red_gradient(hm, mat);
            let bw = bend_weights.node_mut(i, j);
            bw[0] = w / 24.0 * dq[0][0];
            bw[1] = w / 24.0 * dq[0][1];
            bw[2] = w / 24.0 * dq[1][0];
            bw[3] = w / 24.0 * dq[1][1];
        }
    }
    let mut gv_out = hessian2_adjoint(&bend_weights, grid)?;

    // Exchange: 2 w grad zeta scattered back.
    let mut exch_weights = Field2::zeros(grid, 6);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let g = gz_field.node(i, j);
            let g: Vec<f64> = g.to_vec();
            let ew = exch_weights.node_mut(i, j);
            for c in 0..6 {
                ew[c] = 2.0 * w * g[c];
            }
        }
    }
    let exch_grad = grad2_adjoint(&exch_weights, grid)?;

    // Magnetostatic + Zeeman on zeta; mechanical loads on u, v.
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = grid.quad_weight(i, j);
            let z2 = state.zeta.field().at(i, j, 2);
            let hf = loads.hfield.node(i, j);
            let hf = [hf[0], hf[1], hf[2]];
            let e = exch_grad.node(i, j);
            let e = [e[0], e[1], e[2]];
            let gzo = gz_out.node_mut(i, j);
            gzo[0] += e[0] - w * hf[0];
            gzo[1] += e[1] - w * hf[1];
            gzo[2] += e[2] + w * z2 - w * hf[2];

            let f = loads.f.node(i, j);
            let f = [f[0], f[1]];
            let guo = gu_out.node_mut(i, j);
            guo[0] -= w * f[0];
            guo[1] -= w * f[1];
            gv_out.node_mut(i, j)[0] -= w * loads.g.at(i, j, 0);
        }
    }

    Ok((gu_out, gv_out, gz_out))
}

/// Analytic gradient of the total energy at time `t`.
pub fn gradient_f0(
    t: f64,
    state: &ReducedState,
    schedule: &LoadSchedule,
    grid: &Grid2,
    mat: &Material,
) -> Result<StateGradient> {
    let loads = schedule.loads_at(t)?;
    gradient_f0_with_loads(state, &loads, grid, mat)
}

/// [`gradient_f0`] with loads already interpolated.
pub fn gradient_f0_with_loads(
    state: &ReducedState,
    loads: &Loads,
    grid: &Grid2,
    mat: &Material,
) -> Result<StateGradient> {
    let (mut gu, mut gv, mut gz) = gradient_raw(state, loads, grid, mat)?;
    zero_boundary(&mut gu, grid);
    zero_boundary(&mut gv, grid);
    project_tangent(&mut gz, &state.zeta);
    Ok(StateGradient { gu, gv, gz })
}
