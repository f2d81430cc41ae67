//! Compensated (double-double) scalars and 3x3 matrices.
//!
//! The magnetoelastic density is evaluated through this module so that the
//! product `sqrt(F^T F) K_h^(-1)` is assembled with a single final rounding
//! per entry. States on the energy well then evaluate to exactly zero: the
//! assembled argument lands within half an ulp of the identity for every
//! thickness, instead of depending on the rounding luck of a particular
//! operation order.

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

pub(crate) const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
pub(crate) const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

pub(crate) fn from(a: f64) -> Dd {
    Dd { hi: a, lo: 0.0 }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

pub(crate) fn add(x: Dd, y: Dd) -> Dd {
    let (s, e) = two_sum(x.hi, y.hi);
    let e = e + x.lo + y.lo;
    let (hi, lo) = two_sum(s, e);
    Dd { hi, lo }
}

pub(crate) fn neg(x: Dd) -> Dd {
    Dd {
        hi: -x.hi,
        lo: -x.lo,
    }
}

pub(crate) fn sub(x: Dd, y: Dd) -> Dd {
    add(x, neg(y))
}

pub(crate) fn mul(x: Dd, y: Dd) -> Dd {
    let (p, e) = two_prod(x.hi, y.hi);
    let e = e + x.hi * y.lo + x.lo * y.hi;
    let (hi, lo) = two_sum(p, e);
    Dd { hi, lo }
}

pub(crate) fn div(x: Dd, y: Dd) -> Dd {
    let q1 = x.hi / y.hi;
    let r = sub(x, mul(from(q1), y));
    let q2 = (r.hi + r.lo) / y.hi;
    let (hi, lo) = two_sum(q1, q2);
    Dd { hi, lo }
}

pub(crate) fn round(x: Dd) -> f64 {
    x.hi + x.lo
}

/// 3x3 matrix with double-double entries, row-major.
pub(crate) type Mat3d = [[Dd; 3]; 3];

pub(crate) fn mat_from(m: &crate::linalg::Mat3) -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = from(m.at(i, j));
        }
    }
    out
}

pub(crate) fn mat_round(m: &Mat3d) -> crate::linalg::Mat3 {
    let mut out = crate::linalg::Mat3::ZERO;
    for i in 0..3 {
        for j in 0..3 {
            out.set(i, j, round(m[i][j]));
        }
    }
    out
}

pub(crate) fn mat_identity() -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = ONE;
    }
    out
}

pub(crate) fn mat_mul(a: &Mat3d, b: &Mat3d) -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = ZERO;
            for k in 0..3 {
                s = add(s, mul(a[i][k], b[k][j]));
            }
            out[i][j] = s;
        }
    }
    out
}

pub(crate) fn mat_transpose(a: &Mat3d) -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub(crate) fn mat_add(a: &Mat3d, b: &Mat3d) -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = add(a[i][j], b[i][j]);
        }
    }
    out
}

pub(crate) fn mat_scale(a: &Mat3d, s: Dd) -> Mat3d {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = mul(a[i][j], s);
        }
    }
    out
}

pub(crate) fn mat_det(a: &Mat3d) -> Dd {
    let m = |i: usize, j: usize| a[i][j];
    let c0 = sub(mul(m(1, 1), m(2, 2)), mul(m(1, 2), m(2, 1)));
    let c1 = sub(mul(m(1, 0), m(2, 2)), mul(m(1, 2), m(2, 0)));
    let c2 = sub(mul(m(1, 0), m(2, 1)), mul(m(1, 1), m(2, 0)));
    add(sub(mul(m(0, 0), c0), mul(m(0, 1), c1)), mul(m(0, 2), c2))
}

/// Inverse through the adjugate; the caller guarantees a safely nonzero
/// determinant.
pub(crate) fn mat_inverse(a: &Mat3d) -> Mat3d {
    let m = |i: usize, j: usize| a[i][j];
    let cof = |r0: usize, c0: usize, r1: usize, c1: usize| {
        sub(mul(m(r0, c0), m(r1, c1)), mul(m(r0, c1), m(r1, c0)))
    };
    // adj(A)_ij = cofactor_ji
    let adj = [
        [cof(1, 1, 2, 2), neg(cof(0, 1, 2, 2)), cof(0, 1, 1, 2)],
        [neg(cof(1, 0, 2, 2)), cof(0, 0, 2, 2), neg(cof(0, 0, 1, 2))],
        [cof(1, 0, 2, 1), neg(cof(0, 0, 2, 1)), cof(0, 0, 1, 1)],
    ];
    let det = mat_det(a);
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = div(adj[i][j], det);
        }
    }
    out
}

fn mat_diff_norm_hi(a: &Mat3d, b: &Mat3d) -> f64 {
    let mut s = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let d = round(sub(a[i][j], b[i][j]));
            s = s.max(d.abs());
        }
    }
    s
}

/// Principal square root of a symmetric positive definite dd matrix by the
/// Denman-Beavers iteration with determinant scaling.
pub(crate) fn mat_sqrt_spd(a: &Mat3d) -> Option<Mat3d> {
    let mut y = *a;
    let mut z = mat_identity();
    let scale_ref = round(mat_det(a)).abs();
    if !(scale_ref > 0.0) || !scale_ref.is_finite() {
        return None;
    }
    for _ in 0..80 {
        // Determinant scaling accelerates the pre-quadratic phase.
        let dy = round(mat_det(&y)).abs();
        let dz = round(mat_det(&z)).abs();
        if !(dy > 0.0 && dz > 0.0) || !dy.is_finite() || !dz.is_finite() {
            return None;
        }
        let g = from((dy * dz).powf(-1.0 / 6.0));
        let ys = mat_scale(&y, g);
        let zs = mat_scale(&z, g);
        let y_next = mat_scale(&mat_add(&ys, &mat_inverse(&zs)), from(0.5));
        let z_next = mat_scale(&mat_add(&zs, &mat_inverse(&ys)), from(0.5));
        let drift = mat_diff_norm_hi(&y_next, &ys);
        y = y_next;
        z = z_next;
        if drift <= 1e-30 * round(y[0][0]).abs().max(1.0) {
            // One clean-up iteration after convergence.
            let y_fin = mat_scale(&mat_add(&y, &mat_inverse(&z)), from(0.5));
            return Some(y_fin);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat3;

    #[test]
    fn dd_sum_is_error_free() {
        let s = 0.025f64.powi(4);
        let x = add(ONE, from(s));
        // The (hi, lo) pair carries 1 + s exactly: peeling off the leading 1
        // recovers s bit for bit.
        assert_eq!((x.hi - 1.0) + x.lo, s);
    }

    #[test]
    fn dd_division_accuracy() {
        let s = from(1e-7);
        let c = div(s, add(ONE, s));
        // c = s / (1 + s): residual of c (1 + s) - s must be ~1e-39.
        let res = sub(mul(c, add(ONE, s)), s);
        assert!(round(res).abs() < 1e-38);
    }

    #[test]
    fn dd_matrix_sqrt_matches_jacobi() {
        let a = Mat3([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 0.9]]);
        let s_dd = mat_round(&mat_sqrt_spd(&mat_from(&a)).unwrap());
        let s = crate::linalg::sqrt_spd3(&a).unwrap();
        assert!(s_dd.sub(&s).norm() < 1e-13);
        assert!(s_dd.mul(&s_dd).sub(&a).norm() < 1e-14);
    }

    #[test]
    fn dd_matrix_sqrt_exact_on_near_identity_diagonal() {
        for &s in &[1e-3f64, 1e-5, 1e-7, 3.9e-7] {
            let f = mat_add(&mat_identity(), &{
                let mut m = [[ZERO; 3]; 3];
                m[2][2] = from(s);
                m
            });
            let a = mat_mul(&mat_transpose(&f), &f);
            let y = mat_sqrt_spd(&a).unwrap();
            // The dd square root recovers 1 + s to ~1e-30.
            let dev = round(sub(y[2][2], add(ONE, from(s))));
            assert!(dev.abs() < 1e-28, "dev = {dev:e}");
        }
    }
}
