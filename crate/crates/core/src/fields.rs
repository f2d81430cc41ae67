//! Uniform tensor grids on the section and the reference box, node-centered
//! fields, discrete differential operators, quadrature, and the unit-sphere
//! projection.
//!
//! Grids are node-centered and include the boundary. First derivatives use
//! central differences at interior nodes and second-order one-sided stencils
//! on boundary rows. The Hessian operator applies a mirrored ghost layer
//! (`f(-1) = f(1)`) so that the discrete normal derivative vanishes on the
//! boundary, matching the clamped-plate convention of the reduced model.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::Vec3;

/// Uniform rectangular grid on the section `[0, lx] x [0, ly]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2 {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid2> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidParameter {
                what: format!("grid needs nx, ny >= 3, got {nx} x {ny}"),
            });
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidParameter {
                what: format!("grid needs positive side lengths, got {lx} x {ly}"),
            });
        }
        Ok(Grid2 { nx, ny, lx, ly })
    }

    pub fn unit_square(n: usize) -> Result<Grid2> {
        Grid2::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    /// Linear node index, x fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Trapezoidal quadrature weight of node (i, j).
    pub fn quad_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.dx() * self.dy()
    }
}

/// The reference box: a section grid plus `nz` nodes across the thickness
/// coordinate `x3 in (-1/2, 1/2)`, symmetric about zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    section: Grid2,
    nz: usize,
}

impl Grid3 {
    pub fn new(section: Grid2, nz: usize) -> Result<Grid3> {
        if nz < 3 {
            return Err(Error::InvalidParameter {
                what: format!("grid needs nz >= 3, got {nz}"),
            });
        }
        Ok(Grid3 { section, nz })
    }

    pub fn section(&self) -> &Grid2 {
        &self.section
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn x3(&self, k: usize) -> f64 {
        -0.5 + k as f64 * self.dz()
    }

    pub fn node_count(&self) -> usize {
        self.section.node_count() * self.nz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.section.ny + j) * self.section.nx + i
    }

    pub fn quad_weight(&self, i: usize, j: usize, k: usize) -> f64 {
        let wz = if k == 0 || k == self.nz - 1 { 0.5 } else { 1.0 };
        self.section.quad_weight(i, j) * wz * self.dz()
    }
}

/// Per-node real vectors with a fixed component count on a [`Grid2`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field2 {
    nx: usize,
    ny: usize,
    d: usize,
    data: Vec<f64>,
}

const VALID_COMPONENT_COUNTS: [usize; 5] = [1, 2, 3, 4, 9];

fn check_components(d: usize) -> Result<()> {
    // grad2 output doubles the input component count, so 6, 8 and 18 also
    // occur as carriers.
    if VALID_COMPONENT_COUNTS.contains(&d) || [6, 8, 18].contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            what: format!("unsupported component count {d}"),
        })
    }
}

impl Field2 {
    pub fn zeros(grid: &Grid2, d: usize) -> Field2 {
        check_components(d).expect("component count");
        Field2 {
            nx: grid.nx,
            ny: grid.ny,
            d,
            data: vec![0.0; grid.node_count() * d],
        }
    }

    pub fn constant(grid: &Grid2, values: &[f64]) -> Field2 {
        let mut f = Field2::zeros(grid, values.len());
        for node in 0..grid.node_count() {
            f.data[node * values.len()..(node + 1) * values.len()].copy_from_slice(values);
        }
        f
    }

    /// Fill from a closure of the node coordinates.
    pub fn from_fn(grid: &Grid2, d: usize, mut f: impl FnMut(f64, f64, &mut [f64])) -> Field2 {
        let mut out = Field2::zeros(grid, d);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j) * d;
                f(grid.x(i), grid.y(j), &mut out.data[idx..idx + d]);
            }
        }
        out
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn matches(&self, grid: &Grid2) -> bool {
        self.nx == grid.nx && self.ny == grid.ny
    }

    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let idx = (j * self.nx + i) * self.d;
        &self.data[idx..idx + self.d]
    }

    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let idx = (j * self.nx + i) * self.d;
        &mut self.data[idx..idx + self.d]
    }

    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(j * self.nx + i) * self.d + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Field2 {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    fn ensure_grid(&self, grid: &Grid2, what: &'static str) -> Result<()> {
        if self.matches(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch { what })
        }
    }

    fn ensure_d(&self, d: usize, what: &'static str) -> Result<()> {
        if self.d == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected: d,
                got: self.d,
            })
        }
    }
}

/// Per-node real vectors on a [`Grid3`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field3 {
    nx: usize,
    ny: usize,
    nz: usize,
    d: usize,
    data: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: &Grid3, d: usize) -> Field3 {
        check_components(d).expect("component count");
        Field3 {
            nx: grid.section.nx,
            ny: grid.section.ny,
            nz: grid.nz,
            d,
            data: vec![0.0; grid.node_count() * d],
        }
    }

    pub fn from_fn(grid: &Grid3, d: usize, mut f: impl FnMut(f64, f64, f64, &mut [f64])) -> Field3 {
        let mut out = Field3::zeros(grid, d);
        let s = grid.section;
        for k in 0..grid.nz {
            for j in 0..s.ny {
                for i in 0..s.nx {
                    let idx = grid.index(i, j, k) * d;
                    f(s.x(i), s.y(j), grid.x3(k), &mut out.data[idx..idx + d]);
                }
            }
        }
        out
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matches(&self, grid: &Grid3) -> bool {
        self.nx == grid.section.nx && self.ny == grid.section.ny && self.nz == grid.nz
    }

    pub fn node(&self, grid: &Grid3, i: usize, j: usize, k: usize) -> &[f64] {
        let idx = grid.index(i, j, k) * self.d;
        &self.data[idx..idx + self.d]
    }

    pub fn node_mut(&mut self, grid: &Grid3, i: usize, j: usize, k: usize) -> &mut [f64] {
        let idx = grid.index(i, j, k) * self.d;
        &mut self.data[idx..idx + self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A [`Field2`] with three components of unit Euclidean length per node.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField2 {
    field: Field2,
}

pub const DIRECTOR_NORM_TOL: f64 = 1e-12;

impl DirectorField2 {
    /// Wrap a field whose nodes are already unit vectors (within 1e-12).
    pub fn new(field: Field2) -> Result<DirectorField2> {
        field.ensure_d(3, "director field")?;
        for node in 0..field.node_count() {
            let v = &field.data[node * 3..node * 3 + 3];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if (norm - 1.0).abs() > DIRECTOR_NORM_TOL {
                return Err(Error::DegenerateDirector { node, norm });
            }
        }
        Ok(DirectorField2 { field })
    }

    pub fn constant(grid: &Grid2, direction: Vec3) -> Result<DirectorField2> {
        let norm = (direction[0] * direction[0]
            + direction[1] * direction[1]
            + direction[2] * direction[2])
            .sqrt();
        if norm < 1e-14 {
            return Err(Error::DegenerateDirector { node: 0, norm });
        }
        let unit = [direction[0] / norm, direction[1] / norm, direction[2] / norm];
        Ok(DirectorField2 {
            field: Field2::constant(grid, &unit),
        })
    }

    pub fn field(&self) -> &Field2 {
        &self.field
    }

    pub fn into_field(self) -> Field2 {
        self.field
    }

    pub fn node(&self, i: usize, j: usize) -> Vec3 {
        let v = self.field.node(i, j);
        [v[0], v[1], v[2]]
    }

    /// Worst per-node deviation of the Euclidean norm from one.
    pub fn norm_drift(&self) -> f64 {
        let mut drift: f64 = 0.0;
        for node in 0..self.field.node_count() {
            let v = &self.field.data[node * 3..node * 3 + 3];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            drift = drift.max((norm - 1.0).abs());
        }
        drift
    }
}

impl std::ops::Deref for DirectorField2 {
    type Target = Field2;

    fn deref(&self) -> &Field2 {
        &self.field
    }
}

/// Normalize every node vector to unit length.
///
/// Nodes with norm below 1e-14 cannot be projected and are reported as
/// degenerate.
pub fn project_sphere(field: &Field2) -> Result<DirectorField2> {
    let mut out = field.clone();
    out.ensure_d(3, "project_sphere")?;
    for node in 0..out.node_count() {
        let v = &mut out.data[node * 3..node * 3 + 3];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm < 1e-14 {
            return Err(Error::DegenerateDirector { node, norm });
        }
        v[0] /= norm;
        v[1] /= norm;
        v[2] /= norm;
    }
    Ok(DirectorField2 { field: out })
}

// One-dimensional first-derivative stencil along a line of n nodes:
// second-order one-sided at the ends, central in the interior.
// Returns (offsets, coefficients) relative to position `i`, already divided
// by the step.
#[inline]
fn d1_stencil(i: usize, n: usize, inv_step: f64) -> ([(isize, f64); 3], usize) {
    if i == 0 {
        (
            [(0, -1.5 * inv_step), (1, 2.0 * inv_step), (2, -0.5 * inv_step)],
            3,
        )
    } else if i == n - 1 {
        (
            [(0, 1.5 * inv_step), (-1, -2.0 * inv_step), (-2, 0.5 * inv_step)],
            3,
        )
    } else {
        ([(-1, -0.5 * inv_step), (1, 0.5 * inv_step), (0, 0.0)], 2)
    }
}

/// Discrete in-plane gradient: a field with `d` components becomes one with
/// `2 d` components laid out `[c0_x, c0_y, c1_x, c1_y, ...]`.
pub fn grad2(field: &Field2, grid: &Grid2) -> Result<Field2> {
    field.ensure_grid(grid, "grad2")?;
    let d = field.d;
    let mut out = Field2::zeros(grid, 2 * d);
    let inv_dx = 1.0 / grid.dx();
    let inv_dy = 1.0 / grid.dy();
    let nx = grid.nx;
    let ny = grid.ny;
    for j in 0..ny {
        for i in 0..nx {
            let (sx, nsx) = d1_stencil(i, nx, inv_dx);
            let (sy, nsy) = d1_stencil(j, ny, inv_dy);
            let out_idx = grid.index(i, j) * 2 * d;
            for c in 0..d {
                let mut gx = 0.0;
                for &(off, w) in &sx[..nsx] {
                    let ii = (i as isize + off) as usize;
                    gx += w * field.at(ii, j, c);
                }
                let mut gy = 0.0;
                for &(off, w) in &sy[..nsy] {
                    let jj = (j as isize + off) as usize;
                    gy += w * field.at(i, jj, c);
                }
                out.data[out_idx + 2 * c] = gx;
                out.data[out_idx + 2 * c + 1] = gy;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`grad2`]: scatters `2 d`-component weights back onto a
/// `d`-component field so that `<grad2(f), w> = <f, grad2_adjoint(w)>`
/// holds exactly (plain Euclidean pairings over all stored components).
pub fn grad2_adjoint(weights: &Field2, grid: &Grid2) -> Result<Field2> {
    weights.ensure_grid(grid, "grad2_adjoint")?;
    if weights.d % 2 != 0 {
        return Err(Error::DimensionMismatch {
            what: "grad2_adjoint",
            expected: 2,
            got: weights.d,
        });
    }
    let d = weights.d / 2;
    let mut out = Field2::zeros(grid, d);
    let inv_dx = 1.0 / grid.dx();
    let inv_dy = 1.0 / grid.dy();
    let nx = grid.nx;
    let ny = grid.ny;
    for j in 0..ny {
        for i in 0..nx {
            let (sx, nsx) = d1_stencil(i, nx, inv_dx);
            let (sy, nsy) = d1_stencil(j, ny, inv_dy);
            let w_idx = grid.index(i, j) * 2 * d;
            for c in 0..d {
                let wx = weights.data[w_idx + 2 * c];
                if wx != 0.0 {
                    for &(off, w) in &sx[..nsx] {
                        let ii = (i as isize + off) as usize;
                        out.data[grid.index(ii, j) * d + c] += w * wx;
                    }
                }
                let wy = weights.data[w_idx + 2 * c + 1];
                if wy != 0.0 {
                    for &(off, w) in &sy[..nsy] {
                        let jj = (j as isize + off) as usize;
                        out.data[grid.index(i, jj) * d + c] += w * wy;
                    }
                }
            }
        }
    }
    Ok(out)
}

// Second-derivative stencil along a line with the mirrored ghost convention
// f(-1) = f(1): boundary rows see (2 f(1) - 2 f(0)) / step^2.
#[inline]
fn d2_stencil(i: usize, n: usize, inv_step2: f64) -> ([(isize, f64); 3], usize) {
    if i == 0 {
        ([(0, -2.0 * inv_step2), (1, 2.0 * inv_step2), (0, 0.0)], 2)
    } else if i == n - 1 {
        ([(0, -2.0 * inv_step2), (-1, 2.0 * inv_step2), (0, 0.0)], 2)
    } else {
        (
            [
                (-1, inv_step2),
                (0, -2.0 * inv_step2),
                (1, inv_step2),
            ],
            3,
        )
    }
}

/// Discrete Hessian of a scalar field with the clamped ghost convention.
///
/// Output has four components per node, row-major `[H11, H12, H21, H22]`,
/// symmetric by construction. The mixed derivative uses the four-point cross
/// stencil; with mirrored ghosts it vanishes identically on boundary rows.
pub fn hessian2(field: &Field2, grid: &Grid2) -> Result<Field2> {
    field.ensure_grid(grid, "hessian2")?;
    field.ensure_d(1, "hessian2")?;
    let mut out = Field2::zeros(grid, 4);
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let inv_dy2 = 1.0 / (grid.dy() * grid.dy());
    let inv_dxdy4 = 1.0 / (4.0 * grid.dx() * grid.dy());
    let nx = grid.nx;
    let ny = grid.ny;
    for j in 0..ny {
        for i in 0..nx {
            let (sx, nsx) = d2_stencil(i, nx, inv_dx2);
            let mut hxx = 0.0;
            for &(off, w) in &sx[..nsx] {
                hxx += w * field.at((i as isize + off) as usize, j, 0);
            }
            let (sy, nsy) = d2_stencil(j, ny, inv_dy2);
            let mut hyy = 0.0;
            for &(off, w) in &sy[..nsy] {
                hyy += w * field.at(i, (j as isize + off) as usize, 0);
            }
            // Mirrored ghosts cancel the cross stencil on boundary rows.
            let hxy = if grid.is_boundary(i, j) {
                0.0
            } else {
                (field.at(i + 1, j + 1, 0) - field.at(i + 1, j - 1, 0)
                    - field.at(i - 1, j + 1, 0)
                    + field.at(i - 1, j - 1, 0))
                    * inv_dxdy4
            };
            let idx = grid.index(i, j) * 4;
            out.data[idx] = hxx;
            out.data[idx + 1] = hxy;
            out.data[idx + 2] = hxy;
            out.data[idx + 3] = hyy;
        }
    }
    Ok(out)
}

/// Adjoint of [`hessian2`]: scatters four-component weights back onto a
/// scalar field.
pub fn hessian2_adjoint(weights: &Field2, grid: &Grid2) -> Result<Field2> {
    weights.ensure_grid(grid, "hessian2_adjoint")?;
    weights.ensure_d(4, "hessian2_adjoint")?;
    let mut out = Field2::zeros(grid, 1);
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let inv_dy2 = 1.0 / (grid.dy() * grid.dy());
    let inv_dxdy4 = 1.0 / (4.0 * grid.dx() * grid.dy());
    let nx = grid.nx;
    let ny = grid.ny;
    for j in 0..ny {
        for i in 0..nx {
            let idx = grid.index(i, j) * 4;
            let wxx = weights.data[idx];
            let wxy = weights.data[idx + 1] + weights.data[idx + 2];
            let wyy = weights.data[idx + 3];
            if wxx != 0.0 {
                let (sx, nsx) = d2_stencil(i, nx, inv_dx2);
                for &(off, w) in &sx[..nsx] {
                    out.data[grid.index((i as isize + off) as usize, j)] += w * wxx;
                }
            }
            if wyy != 0.0 {
                let (sy, nsy) = d2_stencil(j, ny, inv_dy2);
                for &(off, w) in &sy[..nsy] {
                    out.data[grid.index(i, (j as isize + off) as usize)] += w * wyy;
                }
            }
            if wxy != 0.0 && !grid.is_boundary(i, j) {
                out.data[grid.index(i + 1, j + 1)] += inv_dxdy4 * wxy;
                out.data[grid.index(i + 1, j - 1)] -= inv_dxdy4 * wxy;
                out.data[grid.index(i - 1, j + 1)] -= inv_dxdy4 * wxy;
                out.data[grid.index(i - 1, j - 1)] += inv_dxdy4 * wxy;
            }
        }
    }
    Ok(out)
}

/// Tensor-product trapezoidal quadrature of a scalar field over the section.
pub fn integrate2(field: &Field2, grid: &Grid2) -> Result<f64> {
    field.ensure_grid(grid, "integrate2")?;
    field.ensure_d(1, "integrate2")?;
    let mut sum = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            sum += grid.quad_weight(i, j) * field.at(i, j, 0);
        }
    }
    Ok(sum)
}

/// Trapezoidal quadrature of a scalar field over the reference box.
pub fn integrate3(field: &Field3, grid: &Grid3) -> Result<f64> {
    if !field.matches(grid) {
        return Err(Error::GridMismatch { what: "integrate3" });
    }
    if field.d != 1 {
        return Err(Error::DimensionMismatch {
            what: "integrate3",
            expected: 1,
            got: field.d,
        });
    }
    let s = grid.section;
    let mut sum = 0.0;
    for k in 0..grid.nz {
        for j in 0..s.ny {
            for i in 0..s.nx {
                sum += grid.quad_weight(i, j, k) * field.data[grid.index(i, j, k)];
            }
        }
    }
    Ok(sum)
}

fn fmt_value(v: f64) -> String {
    // 17 significant digits round-trip f64 exactly.
    format!("{v:.16e}")
}

/// Write a section field in the dump format: header `x,y,c0[,c1,...]`,
/// one row per node, x fastest.
pub fn write_field2_csv<W: Write>(w: &mut W, field: &Field2, grid: &Grid2) -> Result<()> {
    field.ensure_grid(grid, "write_field2_csv")?;
    let mut header = String::from("x,y");
    for c in 0..field.d {
        header.push_str(&format!(",c{c}"));
    }
    writeln!(w, "{header}")?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let mut row = format!("{},{}", fmt_value(grid.x(i)), fmt_value(grid.y(j)));
            for c in 0..field.d {
                row.push(',');
                row.push_str(&fmt_value(field.at(i, j, c)));
            }
            writeln!(w, "{row}")?;
        }
    }
    Ok(())
}

/// Write a box field in the dump format: header `x,y,z,c0[,...]`, x fastest.
pub fn write_field3_csv<W: Write>(w: &mut W, field: &Field3, grid: &Grid3) -> Result<()> {
    if !field.matches(grid) {
        return Err(Error::GridMismatch {
            what: "write_field3_csv",
        });
    }
    let mut header = String::from("x,y,z");
    for c in 0..field.d {
        header.push_str(&format!(",c{c}"));
    }
    writeln!(w, "{header}")?;
    let s = grid.section;
    for k in 0..grid.nz {
        for j in 0..s.ny {
            for i in 0..s.nx {
                let mut row = format!(
                    "{},{},{}",
                    fmt_value(s.x(i)),
                    fmt_value(s.y(j)),
                    fmt_value(grid.x3(k))
                );
                let node = field.node(grid, i, j, k);
                for c in 0..field.d {
                    row.push(',');
                    row.push_str(&fmt_value(node[c]));
                }
                writeln!(w, "{row}")?;
            }
        }
    }
    Ok(())
}

/// Read a section field dump written by [`write_field2_csv`].
///
/// The grid is reconstructed from the coordinate columns.
pub fn read_field2_csv<R: BufRead>(r: &mut R) -> Result<(Grid2, Field2)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty dump".into(),
        })?
        .map_err(Error::Io)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "x" || cols[1] != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let d = cols.len() - 2;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != d + 2 {
            return Err(Error::Parse {
                line: lineno + 2,
                msg: format!("expected {} columns, got {}", d + 2, parts.len()),
            });
        }
        let parse = |s: &str, lineno: usize| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno + 2,
                msg: format!("bad number `{s}`: {e}"),
            })
        };
        xs.push(parse(parts[0], lineno)?);
        ys.push(parse(parts[1], lineno)?);
        for p in &parts[2..] {
            values.push(parse(p, lineno)?);
        }
    }
    // x runs fastest: nx is the prefix length until x resets.
    let nx = xs
        .iter()
        .position(|&x| x < xs.first().copied().unwrap_or(0.0))
        .or_else(|| (1..xs.len()).find(|&i| xs[i] <= xs[i - 1]))
        .unwrap_or(xs.len());
    if nx < 3 || xs.len() % nx != 0 {
        return Err(Error::Parse {
            line: 2,
            msg: format!("cannot infer grid from {} rows (nx = {nx})", xs.len()),
        });
    }
    let ny = xs.len() / nx;
    let lx = xs[nx - 1];
    let ly = ys[xs.len() - 1];
    let grid = Grid2::new(nx, ny, lx, ly)?;
    let field = Field2 {
        nx,
        ny,
        d,
        data: values,
    };
    Ok((grid, field))
}

/// Read a box field dump written by [`write_field3_csv`].
pub fn read_field3_csv<R: BufRead>(r: &mut R) -> Result<(Grid3, Field3)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty dump".into(),
        })?
        .map_err(Error::Io)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[0] != "x" || cols[1] != "y" || cols[2] != "z" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let d = cols.len() - 3;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != d + 3 {
            return Err(Error::Parse {
                line: lineno + 2,
                msg: format!("expected {} columns, got {}", d + 3, parts.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno + 2,
                msg: format!("bad number `{s}`: {e}"),
            })
        };
        xs.push(parse(parts[0])?);
        ys.push(parse(parts[1])?);
        zs.push(parse(parts[2])?);
        for p in &parts[3..] {
            values.push(parse(p)?);
        }
    }
    let nx = (1..xs.len()).find(|&i| xs[i] <= xs[i - 1]).unwrap_or(xs.len());
    let plane = (1..zs.len()).find(|&i| zs[i] > zs[i - 1]).unwrap_or(zs.len());
    if nx < 3 || plane % nx != 0 || xs.len() % plane != 0 {
        return Err(Error::Parse {
            line: 2,
            msg: format!("cannot infer box grid from {} rows", xs.len()),
        });
    }
    let ny = plane / nx;
    let nz = xs.len() / plane;
    let section = Grid2::new(nx, ny, xs[nx - 1], ys[plane - 1])?;
    let grid = Grid3::new(section, nz)?;
    let field = Field3 {
        nx,
        ny,
        nz,
        d,
        data: values,
    };
    Ok((grid, field))
}
