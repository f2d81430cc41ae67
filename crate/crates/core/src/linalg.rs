//! Small dense linear algebra for 3x3 and 2x2 matrices.
//!
//! Everything here is stack-allocated and deterministic. The symmetric
//! eigensolver is a cyclic Jacobi sweep with a fixed rotation order so that
//! repeated runs produce bit-identical results.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat2 = [[f64; 2]; 2];

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// 3x3 matrix, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn identity() -> Mat3 {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        Mat3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = a[i] * b[j];
            }
        }
        Mat3(m)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[i][j] = v;
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let a = &self.0;
        let b = &rhs.0;
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Mat3(c)
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let a = &self.0;
        [
            a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
            a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
            a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
        ]
    }

    pub fn add(&self, rhs: &Mat3) -> Mat3 {
        let mut c = self.0;
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += rhs.0[i][j];
            }
        }
        Mat3(c)
    }

    pub fn sub(&self, rhs: &Mat3) -> Mat3 {
        let mut c = self.0;
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] -= rhs.0[i][j];
            }
        }
        Mat3(c)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut c = self.0;
        for row in c.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Mat3(c)
    }

    pub fn sym(&self) -> Mat3 {
        let m = &self.0;
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        Mat3(c)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for row in &self.0 {
            for v in row {
                s += v * v;
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.0;
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in (i + 1)..3 {
                dev = dev.max((m[i][j] - m[j][i]).abs());
            }
        }
        dev
    }
}

/// Adjugate (transpose of the cofactor matrix): F adj(F) = det(F) I.
pub fn adjugate3(f: &Mat3) -> Mat3 {
    let m = &f.0;
    let cof = |a: f64, b: f64, c: f64, d: f64| a * d - b * c;
    // adj(F)_ij = cofactor_ji
    Mat3([
        [
            cof(m[1][1], m[1][2], m[2][1], m[2][2]),
            -cof(m[0][1], m[0][2], m[2][1], m[2][2]),
            cof(m[0][1], m[0][2], m[1][1], m[1][2]),
        ],
        [
            -cof(m[1][0], m[1][2], m[2][0], m[2][2]),
            cof(m[0][0], m[0][2], m[2][0], m[2][2]),
            -cof(m[0][0], m[0][2], m[1][0], m[1][2]),
        ],
        [
            cof(m[1][0], m[1][1], m[2][0], m[2][1]),
            -cof(m[0][0], m[0][1], m[2][0], m[2][1]),
            cof(m[0][0], m[0][1], m[1][0], m[1][1]),
        ],
    ])
}

const JACOBI_MAX_SWEEPS: usize = 30;
const JACOBI_OFF_TOL: f64 = 1e-14;

/// Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns the eigenvalues and the matrix whose columns are the matching
/// eigenvectors. Rotations are applied in the fixed order
/// (0,1), (0,2), (1,2) per sweep, capped at 30 sweeps, and the iteration
/// stops once every off-diagonal entry is at or below `1e-14 * max(1, |A|)`.
pub fn sym_eigen3(a: &Mat3) -> Result<(Vec3, Mat3)> {
    let dev = a.asymmetry();
    if dev > 1e-12 * a.norm().max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    let mut m = a.sym().0;
    let mut q = Mat3::identity().0;
    let tol = JACOBI_OFF_TOL * a.norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (m[0][1].abs()).max(m[0][2].abs()).max(m[1][2].abs());
        if off <= tol {
            break;
        }
        for &(p, r) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[p][r];
            if apq.abs() <= tol {
                continue;
            }
            // Classic Jacobi rotation annihilating m[p][r].
            let theta = (m[r][r] - m[p][p]) / (2.0 * apq);
            let t = if theta >= 0.0 {
                1.0 / (theta + (1.0 + theta * theta).sqrt())
            } else {
                -1.0 / (-theta + (1.0 + theta * theta).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;

            for k in 0..3 {
                let mkp = m[k][p];
                let mkr = m[k][r];
                m[k][p] = c * mkp - s * mkr;
                m[k][r] = s * mkp + c * mkr;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mrk = m[r][k];
                m[p][k] = c * mpk - s * mrk;
                m[r][k] = s * mpk + c * mrk;
            }
            m[p][r] = 0.0;
            m[r][p] = 0.0;
            for k in 0..3 {
                let qkp = q[k][p];
                let qkr = q[k][r];
                q[k][p] = c * qkp - s * qkr;
                q[k][r] = s * qkp + c * qkr;
            }
        }
    }

    Ok(([m[0][0], m[1][1], m[2][2]], Mat3(q)))
}

/// Principal square root of a symmetric positive definite 3x3 matrix.
pub fn sqrt_spd3(a: &Mat3) -> Result<Mat3> {
    let (eig, q) = sym_eigen3(a)?;
    let min_eig = eig[0].min(eig[1]).min(eig[2]);
    if min_eig <= 0.0 {
        return Err(Error::NotSpd {
            min_eigenvalue: min_eig,
        });
    }
    let d = Mat3::diag(eig[0].sqrt(), eig[1].sqrt(), eig[2].sqrt());
    let s = q.mul(&d).mul(&q.transpose());
    Ok(s.sym())
}

/// Solve a 3x3 linear system by Gaussian elimination with partial pivoting.
pub fn solve3(a: &Mat3, b: Vec3) -> Result<Vec3> {
    let mut m = a.0;
    let mut rhs = b;
    for col in 0..3 {
        let mut piv = col;
        for row in (col + 1)..3 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::SolverDiverged {
                what: "3x3 gaussian elimination",
                residual: m[piv][col].abs(),
            });
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for k in (row + 1)..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Ok(x)
}

// 2x2 helpers used by the reduced quadratic form.

pub fn sym2(m: Mat2) -> Mat2 {
    [
        [m[0][0], 0.5 * (m[0][1] + m[1][0])],
        [0.5 * (m[0][1] + m[1][0]), m[1][1]],
    ]
}

pub fn tr2(m: Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn norm_sq2(m: Mat2) -> f64 {
    m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_mat3(rng: &mut StdRng) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        Mat3(m)
    }

    #[test]
    fn adjugate_identity() {
        assert_eq!(adjugate3(&Mat3::identity()), Mat3::identity());
    }

    #[test]
    fn adjugate_diagonal() {
        let adj = adjugate3(&Mat3::diag(2.0, 3.0, 5.0));
        assert_eq!(adj, Mat3::diag(15.0, 10.0, 6.0));
    }

    #[test]
    fn adjugate_defining_identity_random() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let f = random_mat3(&mut rng);
            let lhs = f.mul(&adjugate3(&f));
            let rhs = Mat3::identity().scale(f.det());
            let norm = f.norm();
            assert!(lhs.sub(&rhs).norm() <= 1e-12 * norm.powi(3).max(1.0));
        }
    }

    #[test]
    fn sqrt_identity_and_diag() {
        assert_eq!(sqrt_spd3(&Mat3::identity()).unwrap(), Mat3::identity());
        let s = sqrt_spd3(&Mat3::diag(4.0, 9.0, 16.0)).unwrap();
        assert!(s.sub(&Mat3::diag(2.0, 3.0, 4.0)).norm() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back_random_spd() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let f = random_mat3(&mut rng);
            // A = F^T F + eps I is SPD.
            let a = f.transpose().mul(&f).add(&Mat3::identity().scale(0.1));
            let s = sqrt_spd3(&a).unwrap();
            let err = s.mul(&s).sub(&a).norm() / a.norm();
            assert!(err <= 1e-12, "relative error {err:e}");
        }
    }

    #[test]
    fn sqrt_rejects_non_spd() {
        let err = sqrt_spd3(&Mat3::diag(1.0, -2.0, 3.0)).unwrap_err();
        match err {
            crate::error::Error::NotSpd { min_eigenvalue } => {
                assert!((min_eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sqrt_rejects_asymmetric() {
        let mut m = Mat3::identity();
        m.set(0, 1, 0.5);
        assert!(sqrt_spd3(&m).is_err());
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..50 {
            let f = random_mat3(&mut rng);
            let a = f.add(&f.transpose()).scale(0.5);
            let (eig, q) = sym_eigen3(&a).unwrap();
            let d = Mat3::diag(eig[0], eig[1], eig[2]);
            let back = q.mul(&d).mul(&q.transpose());
            assert!(back.sub(&a).norm() <= 1e-13 * a.norm().max(1.0));
            // orthogonality
            let qtq = q.transpose().mul(&q);
            assert!(qtq.sub(&Mat3::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn solve3_random() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..50 {
            let a = random_mat3(&mut rng).add(&Mat3::identity().scale(2.0));
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let b = a.mul_vec(x);
            let got = solve3(&a, b).unwrap();
            for k in 0..3 {
                assert!((got[k] - x[k]).abs() < 1e-10);
            }
        }
    }
}
