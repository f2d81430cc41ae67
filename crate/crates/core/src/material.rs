//! Stored elastic energy and the magnetoelastic density.
//!
//! The stored energy is
//!
//! ```text
//! Phi(Y) = mu |sqrt(Y^T Y) - I|^2 + (lambda/2) tr(sqrt(Y^T Y) - I)^2
//!        + cp dist(Y, SO(3))^pexp,      dist(Y, SO(3)) = |sqrt(Y^T Y) - I|
//! ```
//!
//! which is frame indifferent by construction, vanishes exactly on SO(3),
//! and has the quadratic Hessian form `Q(Y) = 2 mu |sym Y|^2 + lambda (tr Y)^2`
//! at the identity. The magnetoelastic density couples the deformation
//! gradient to the magnetization direction through a multiplicative
//! spontaneous-strain factor aligned with the pushed-forward axis
//! `(adj F) lam`.

use crate::dd;
use crate::error::{Error, Result};
use crate::linalg::{
    adjugate3, norm3, norm_sq2, scale3, solve3, sqrt_spd3, sym2, tr2, Mat2, Mat3, Vec3,
};

/// Elastic parameters and exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub mu: f64,
    pub lambda: f64,
    pub cp: f64,
    pub pexp: f64,
    pub beta: f64,
}

impl Material {
    pub fn new(mu: f64, lambda: f64, cp: f64, pexp: f64, beta: f64) -> Result<Material> {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter {
                what: format!("material.mu must be > 0, got {mu}"),
            });
        }
        if !(2.0 * mu + 3.0 * lambda > 0.0) {
            return Err(Error::InvalidParameter {
                what: format!("material needs 2 mu + 3 lambda > 0, got mu = {mu}, lambda = {lambda}"),
            });
        }
        if !(cp >= 0.0) {
            return Err(Error::InvalidParameter {
                what: format!("material.cp must be >= 0, got {cp}"),
            });
        }
        if !(pexp > 3.0) {
            return Err(Error::InvalidParameter {
                what: format!("material.pexp must be > 3, got {pexp}"),
            });
        }
        if !(beta > pexp.max(6.0)) {
            return Err(Error::InvalidParameter {
                what: format!("material.beta must exceed max(6, pexp), got beta = {beta}, pexp = {pexp}"),
            });
        }
        Ok(Material {
            mu,
            lambda,
            cp,
            pexp,
            beta,
        })
    }

    /// Coefficient of the trace term in the reduced quadratic form:
    /// `2 mu lambda / (2 mu + lambda)`.
    pub fn reduced_trace_coefficient(&self) -> f64 {
        2.0 * self.mu * self.lambda / (2.0 * self.mu + self.lambda)
    }

    /// Thickness scaling factor `h^(beta/2)` of the spontaneous strain.
    pub fn strain_scale(&self, h: f64) -> f64 {
        h.powf(0.5 * self.beta)
    }
}

impl Default for Material {
    fn default() -> Material {
        Material::new(1.0, 1.0, 1.0, 4.0, 8.0).expect("default material")
    }
}

/// Stored energy Phi. Requires `det Y > 0`.
pub fn phi(y: &Mat3, mat: &Material) -> Result<f64> {
    let det = y.det();
    if det <= 0.0 {
        return Err(Error::OrientationLoss { det });
    }
    let s = sqrt_spd3(&y.transpose().mul(y))?;
    let e = s.sub(&Mat3::identity());
    let dist_sq = e.norm_sq();
    let tr = e.trace();
    Ok(mat.mu * dist_sq + 0.5 * mat.lambda * tr * tr + mat.cp * dist_sq.powf(0.5 * mat.pexp))
}

/// Quadratic form of Phi at the identity:
/// `Q(Y) = 2 mu |sym Y|^2 + lambda (tr Y)^2`.
pub fn q_phi(y: &Mat3, mat: &Material) -> f64 {
    let s = y.sym();
    2.0 * mat.mu * s.norm_sq() + mat.lambda * y.trace() * y.trace()
}

/// Gradient of [`q_phi`] with respect to the matrix entries:
/// `4 mu sym Y + 2 lambda (tr Y) I`.
pub fn q_phi_gradient(y: &Mat3, mat: &Material) -> Mat3 {
    y.sym()
        .scale(4.0 * mat.mu)
        .add(&Mat3::identity().scale(2.0 * mat.lambda * y.trace()))
}

#[cfg(test)]
fn embed2(xi: Mat2) -> Mat3 {
    Mat3([
        [xi[0][0], xi[0][1], 0.0],
        [xi[1][0], xi[1][1], 0.0],
        [0.0, 0.0, 0.0],
    ])
}

fn shift_matrix(c: Vec3) -> Mat3 {
    let e3 = [0.0, 0.0, 1.0];
    Mat3::outer(c, e3).add(&Mat3::outer(e3, c))
}

/// Minimize `c -> Q(B + c ⊗ e3 + e3 ⊗ c)` over out-of-plane shifts.
///
/// Closed form: the stationarity conditions decouple into
/// `c' = -(B13, B23)` and `B33 + 2 c3 = -lambda tr B'' / (2 mu + lambda)`.
/// Returns the minimizer and the minimum value.
pub fn optimal_shift(b: &Mat3, mat: &Material) -> Result<(Vec3, f64)> {
    let dev = b.asymmetry();
    if dev > 1e-12 * b.norm().max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    let tr_upper = b.at(0, 0) + b.at(1, 1);
    let c = [
        -b.at(0, 2),
        -b.at(1, 2),
        0.5 * (-mat.lambda * tr_upper / (2.0 * mat.mu + mat.lambda) - b.at(2, 2)),
    ];
    let value = q_phi(&b.add(&shift_matrix(c)), mat);
    Ok((c, value))
}

/// Same minimization solved through the 3x3 normal equations; kept as a
/// continuously cross-validated second route.
pub fn optimal_shift_via_system(b: &Mat3, mat: &Material) -> Result<(Vec3, f64)> {
    let dev = b.asymmetry();
    if dev > 1e-12 * b.norm().max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    let bilinear = |x: &Mat3, y: &Mat3| -> f64 {
        let sx = x.sym();
        let sy = y.sym();
        let mut dot = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                dot += sx.at(i, j) * sy.at(i, j);
            }
        }
        2.0 * mat.mu * dot + mat.lambda * x.trace() * y.trace()
    };
    let basis = [
        shift_matrix([1.0, 0.0, 0.0]),
        shift_matrix([0.0, 1.0, 0.0]),
        shift_matrix([0.0, 0.0, 1.0]),
    ];
    let mut a = Mat3::ZERO;
    let mut rhs = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            a.set(i, j, bilinear(&basis[i], &basis[j]));
        }
        rhs[i] = -bilinear(b, &basis[i]);
    }
    let c = solve3(&a, rhs)?;
    let value = q_phi(&b.add(&shift_matrix(c)), mat);
    Ok((c, value))
}

/// Reduced quadratic form: the out-of-plane relaxation of `q_phi` applied
/// to the 3x3 embedding of a 2x2 matrix. For this material it has the
/// closed form `2 mu |sym Xi|^2 + (2 mu lambda / (2 mu + lambda)) (tr Xi)^2`.
pub fn q_phi_red(xi: Mat2, mat: &Material) -> f64 {
    let s = sym2(xi);
    let tr = tr2(xi);
    2.0 * mat.mu * norm_sq2(s) + mat.reduced_trace_coefficient() * tr * tr
}

/// Gradient of [`q_phi_red`] with respect to the 2x2 entries.
pub fn q_phi_red_gradient(xi: Mat2, mat: &Material) -> Mat2 {
    let s = sym2(xi);
    let tr = tr2(xi);
    let kappa = mat.reduced_trace_coefficient();
    [
        [
            4.0 * mat.mu * s[0][0] + 2.0 * kappa * tr,
            4.0 * mat.mu * s[0][1],
        ],
        [
            4.0 * mat.mu * s[1][0],
            4.0 * mat.mu * s[1][1] + 2.0 * kappa * tr,
        ],
    ]
}

fn demag_axis(f: &Mat3, lam: Vec3) -> Result<Vec3> {
    let axis = adjugate3(f).mul_vec(lam);
    let norm = norm3(axis);
    if norm < 1e-300 {
        return Err(Error::DegenerateAxis);
    }
    Ok(scale3(axis, 1.0 / norm))
}

fn check_kh_inputs(f: &Mat3, lam: Vec3, h: f64) -> Result<()> {
    let det = f.det();
    if det <= 0.0 {
        return Err(Error::OrientationLoss { det });
    }
    if (norm3(lam) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            what: format!("magnetization direction must be unit, norm {}", norm3(lam)),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            what: format!("thickness must be positive, got {h}"),
        });
    }
    Ok(())
}

/// Spontaneous-strain factor `I + h^(beta/2) n ⊗ n` with
/// `n = (adj F) lam / |(adj F) lam|`.
pub fn k_h(f: &Mat3, lam: Vec3, h: f64, mat: &Material) -> Result<Mat3> {
    check_kh_inputs(f, lam, h)?;
    let n = demag_axis(f, lam)?;
    let s = mat.strain_scale(h);
    Ok(Mat3::identity().add(&Mat3::outer(n, n).scale(s)))
}

/// Inverse of the spontaneous-strain factor:
/// `I - (h^(beta/2) / (1 + h^(beta/2))) n ⊗ n`.
pub fn k_h_inverse(f: &Mat3, lam: Vec3, h: f64, mat: &Material) -> Result<Mat3> {
    check_kh_inputs(f, lam, h)?;
    let n = demag_axis(f, lam)?;
    let s = mat.strain_scale(h);
    let coeff = s / (1.0 + s);
    Ok(Mat3::identity().sub(&Mat3::outer(n, n).scale(coeff)))
}

/// Magnetoelastic density `W_h(F, lam) = Phi(sqrt(F^T F) K_h(F, lam)^(-1))`.
///
/// The whole argument `sqrt(F^T F) K^(-1)` is evaluated in compensated
/// arithmetic and rounded once per entry (see [`w_h_dd`]), so that states on
/// the energy well come out as exactly zero for every thickness.
pub fn w_h(f: &Mat3, lam: Vec3, h: f64, mat: &Material) -> Result<f64> {
    w_h_dd(&dd::mat_from(f), lam, h, mat)
}

/// [`w_h`] on a deformation gradient carried in double-double precision.
///
/// The recovery-sequence evaluator assembles its analytic gradients this way:
/// a plain f64 assembly already rounds `1 + h^(beta/2)` off the energy well,
/// which would leave representation noise where the density vanishes.
pub(crate) fn w_h_dd(f: &dd::Mat3d, lam: Vec3, h: f64, mat: &Material) -> Result<f64> {
    let f_rounded = dd::mat_round(f);
    check_kh_inputs(&f_rounded, lam, h)?;
    let n = demag_axis(&f_rounded, lam)?;
    let s = mat.strain_scale(h);

    let ftf = dd::mat_mul(&dd::mat_transpose(f), f);
    let sq = match dd::mat_sqrt_spd(&ftf) {
        Some(sq) => sq,
        None => {
            return Err(Error::SolverDiverged {
                what: "matrix square root iteration",
                residual: f64::NAN,
            })
        }
    };

    // S K^(-1) = S - (s / (1 + s)) (S n) ⊗ n, with a single final rounding
    // per entry.
    let coeff = dd::div(dd::from(s), dd::add(dd::ONE, dd::from(s)));
    let mut arg = Mat3::ZERO;
    for i in 0..3 {
        let mut sn = dd::ZERO;
        for k in 0..3 {
            sn = dd::add(sn, dd::mul(sq[i][k], dd::from(n[k])));
        }
        let csn = dd::mul(coeff, sn);
        for j in 0..3 {
            let m_ij = dd::sub(sq[i][j], dd::mul(csn, dd::from(n[j])));
            arg.set(i, j, dd::round(m_ij));
        }
    }
    phi(&arg, mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn mat() -> Material {
        Material::default()
    }

    fn random_mat3(rng: &mut StdRng, scale: f64) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-scale..scale);
            }
        }
        Mat3(m)
    }

    fn random_rotation(rng: &mut StdRng) -> Mat3 {
        // Rodrigues formula from a random axis and angle.
        let axis = {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            ];
            let n = norm3(v).max(1e-9);
            scale3(v, 1.0 / n)
        };
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = angle.sin_cos();
        let k = Mat3([
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]);
        Mat3::identity()
            .add(&k.scale(s))
            .add(&k.mul(&k).scale(1.0 - c))
    }

    fn random_unit(rng: &mut StdRng) -> Vec3 {
        loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            ];
            let n = norm3(v);
            if n > 0.1 {
                return scale3(v, 1.0 / n);
            }
        }
    }

    #[test]
    fn material_invariants() {
        assert!(Material::new(-1.0, 1.0, 1.0, 4.0, 8.0).is_err());
        assert!(Material::new(1.0, -0.5, 1.0, 4.0, 8.0).is_ok()); // 2mu+3lam = 0.5
        assert!(Material::new(0.5, -0.4, 1.0, 4.0, 8.0).is_err()); // 2mu+3lam = -0.2
        assert!(Material::new(1.0, 1.0, 1.0, 2.5, 8.0).is_err());
        assert!(Material::new(1.0, 1.0, 1.0, 4.0, 5.0).is_err());
        assert!(Material::new(1.0, 1.0, 1.0, 7.0, 6.5).is_err()); // beta <= pexp
    }

    #[test]
    fn phi_normalization_and_rotations() {
        let m = mat();
        assert_eq!(phi(&Mat3::identity(), &m).unwrap(), 0.0);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let r = random_rotation(&mut rng);
            assert!(phi(&r, &m).unwrap() < 1e-28);
        }
    }

    #[test]
    fn phi_hand_computed_value() {
        // mu = lambda = cp = 1, pexp = 4:
        // Phi(diag(1,1,1/2)) = 0.25 + 0.125 + 0.0625 = 0.4375.
        let m = mat();
        let v = phi(&Mat3::diag(1.0, 1.0, 0.5), &m).unwrap();
        assert!((v - 0.4375).abs() < 1e-14);
    }

    #[test]
    fn phi_rejects_orientation_loss() {
        assert!(matches!(
            phi(&Mat3::diag(1.0, 1.0, -1.0), &mat()),
            Err(Error::OrientationLoss { .. })
        ));
    }

    #[test]
    fn q_phi_examples() {
        let m = mat();
        assert!((q_phi(&Mat3::identity(), &m) - 15.0).abs() < 1e-14);
        let skew = Mat3([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]]);
        assert_eq!(q_phi(&skew, &m), 0.0);
    }

    #[test]
    fn q_phi_symmetrization_exact() {
        let mut rng = StdRng::seed_from_u64(5);
        let m = mat();
        for _ in 0..50 {
            let y = random_mat3(&mut rng, 2.0);
            assert_eq!(q_phi(&y, &m), q_phi(&y.sym(), &m));
        }
    }

    #[test]
    fn q_phi_coercive_on_symmetric() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..50 {
            let mu = rng.gen_range(0.2..3.0);
            let lambda = rng.gen_range(-0.5 * mu..3.0);
            let m = Material::new(mu, lambda, 0.0, 4.0, 8.0).unwrap();
            let y = random_mat3(&mut rng, 2.0).sym();
            let c = (2.0 * mu).min(2.0 * mu + 3.0 * lambda) / 3.0;
            assert!(q_phi(&y, &m) >= c * y.norm_sq() - 1e-12);
        }
    }

    #[test]
    fn q_phi_matches_taylor_of_phi() {
        // First-order-in-eps agreement of 2 Phi(I + eps Y) / eps^2 with Q(Y).
        let m = mat();
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..10 {
            let y = random_mat3(&mut rng, 1.0);
            let q = q_phi(&y, &m);
            let mut prev_err = f64::INFINITY;
            for &eps in &[1e-2, 5e-3, 2.5e-3] {
                let p = phi(&Mat3::identity().add(&y.scale(eps)), &m).unwrap();
                let err = (2.0 * p / (eps * eps) - q).abs();
                assert!(err <= 0.75 * prev_err.max(1e-9));
                prev_err = err;
            }
        }
    }

    #[test]
    fn taylor_remainder_cubic_bound() {
        // |Phi(I + eps Y) - Q(eps Y) / 2| <= C(Y) eps^3: the normalized
        // remainder r(eps) / eps^3 must stay bounded as eps halves.
        let m = mat();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let y = random_mat3(&mut rng, 1.0);
            let rem = |eps: f64| {
                let p = phi(&Mat3::identity().add(&y.scale(eps)), &m).unwrap();
                (p - 0.5 * q_phi(&y.scale(eps), &m)).abs()
            };
            let mut prev = f64::INFINITY;
            for &eps in &[1e-2, 5e-3, 2.5e-3] {
                let normalized = rem(eps) / (eps * eps * eps);
                assert!(
                    normalized <= 4.0 * prev + 1e-4,
                    "normalized remainder grew: {normalized:e} after {prev:e}"
                );
                prev = normalized.max(1e-6);
            }
        }
    }

    // Brute-force refinement search over c used as the independent oracle
    // for the shift minimization.
    fn brute_force_shift(b: &Mat3, m: &Material) -> (Vec3, f64) {
        let mut center = [0.0, 0.0, 0.0];
        let mut radius = 4.0;
        let mut best = (center, f64::INFINITY);
        for _ in 0..24 {
            for iz in -4i32..=4 {
                for iy in -4i32..=4 {
                    for ix in -4i32..=4 {
                        let c = [
                            center[0] + radius * ix as f64 / 4.0,
                            center[1] + radius * iy as f64 / 4.0,
                            center[2] + radius * iz as f64 / 4.0,
                        ];
                        let v = q_phi(&b.add(&shift_matrix(c)), m);
                        if v < best.1 {
                            best = (c, v);
                        }
                    }
                }
            }
            center = best.0;
            radius *= 0.5;
        }
        best
    }

    #[test]
    fn optimal_shift_examples() {
        let m = mat();
        let (c, v) = optimal_shift(&Mat3::ZERO, &m).unwrap();
        assert_eq!(c, [0.0, 0.0, 0.0]);
        assert_eq!(v, 0.0);

        let (c, v) = optimal_shift(&Mat3::diag(1.0, 1.0, 0.0), &m).unwrap();
        assert!((c[2] + 1.0 / 3.0).abs() < 1e-14 && c[0] == 0.0 && c[1] == 0.0);
        assert!((v - 20.0 / 3.0).abs() < 1e-13);

        let (c, v) = optimal_shift(&Mat3::diag(0.0, 0.0, -1.0), &m).unwrap();
        assert!((c[2] - 0.5).abs() < 1e-14);
        assert!(v.abs() < 1e-26);
    }

    #[test]
    fn optimal_shift_matches_brute_force_and_system() {
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..20 {
            let mu = rng.gen_range(0.3..2.0);
            let lambda = rng.gen_range(-0.3..2.0);
            let m = Material::new(mu, lambda, 1.0, 4.0, 8.0).unwrap();
            let b = random_mat3(&mut rng, 1.5).sym();
            let (c_closed, v_closed) = optimal_shift(&b, &m).unwrap();
            let (c_sys, v_sys) = optimal_shift_via_system(&b, &m).unwrap();
            for k in 0..3 {
                assert!((c_closed[k] - c_sys[k]).abs() < 1e-10);
            }
            assert!((v_closed - v_sys).abs() <= 1e-10 * v_closed.max(1.0));
            let (_, v_brute) = brute_force_shift(&b, &m);
            assert!((v_closed - v_brute).abs() <= 1e-6 * v_closed.max(1.0));
        }
    }

    #[test]
    fn q_phi_red_examples() {
        let m = mat();
        assert_eq!(q_phi_red([[0.0; 2]; 2], &m), 0.0);
        let id2 = [[1.0, 0.0], [0.0, 1.0]];
        assert!((q_phi_red(id2, &m) - 20.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn q_phi_red_agrees_with_numeric_minimization() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..50 {
            let mu = rng.gen_range(0.2..3.0);
            let lambda = rng.gen_range(-0.3 * mu..3.0);
            let m = Material::new(mu, lambda, 1.0, 4.0, 8.0).unwrap();
            let xi = [
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5f64)],
            ];
            let sym = sym2(xi);
            let b = embed2(sym);
            let (_, v_num) = optimal_shift_via_system(&b, &m).unwrap();
            let v_closed = q_phi_red(xi, &m);
            assert!((v_closed - v_num).abs() <= 1e-10 * v_closed.max(1.0));
            // parity in the skew part
            assert_eq!(q_phi_red(xi, &m), q_phi_red(sym, &m));
            if norm_sq2(sym) > 1e-20 {
                assert!(v_closed > 0.0);
            }
        }
    }

    #[test]
    fn k_h_inverse_examples() {
        let m = mat();
        // h = 1 gives h^(beta/2) = 1.
        let k_inv = k_h_inverse(&Mat3::identity(), [0.0, 0.0, 1.0], 1.0, &m).unwrap();
        assert!(k_inv.sub(&Mat3::diag(1.0, 1.0, 0.5)).norm() < 1e-15);

        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..30 {
            let f = random_mat3(&mut rng, 0.4).add(&Mat3::identity());
            if f.det() <= 0.05 {
                continue;
            }
            let lam = random_unit(&mut rng);
            let h = rng.gen_range(0.05..1.0);
            let k = k_h(&f, lam, h, &m).unwrap();
            let k_inv = k_h_inverse(&f, lam, h, &m).unwrap();
            assert!(k.mul(&k_inv).sub(&Mat3::identity()).norm() <= 1e-12);
        }

        // h -> 0 gives the identity up to O(h^(beta/2)).
        let h = 1e-3;
        let k_inv = k_h_inverse(&Mat3::identity(), [1.0, 0.0, 0.0], h, &m).unwrap();
        assert!(k_inv.sub(&Mat3::identity()).norm() <= 2.0 * m.strain_scale(h));
    }

    #[test]
    fn w_h_energy_well() {
        let m = mat();
        for &h in &[1.0, 0.5, 0.1] {
            let s = m.strain_scale(h);
            let f = Mat3::diag(1.0, 1.0, 1.0 + s);
            let v = w_h(&f, [0.0, 0.0, 1.0], h, &m).unwrap();
            assert!(v.abs() <= 1e-12, "h = {h}: w_h = {v:e}");
        }
    }

    #[test]
    fn w_h_identity_argument_value() {
        // F = I, lam = e3, h = 1: the Phi argument is diag(1, 1, 1/2).
        let v = w_h(&Mat3::identity(), [0.0, 0.0, 1.0], 1.0, &mat()).unwrap();
        assert!((v - 0.4375).abs() < 1e-14);
    }

    #[test]
    fn w_h_frame_indifference_and_parity() {
        let m = mat();
        let mut rng = StdRng::seed_from_u64(15);
        for _ in 0..50 {
            let f = random_mat3(&mut rng, 0.3).add(&Mat3::identity());
            if f.det() <= 0.05 {
                continue;
            }
            let lam = random_unit(&mut rng);
            let h = rng.gen_range(0.05..1.0);
            let base = w_h(&f, lam, h, &m).unwrap();

            let r = random_rotation(&mut rng);
            let rotated = w_h(&r.mul(&f), r.mul_vec(lam), h, &m).unwrap();
            assert!((rotated - base).abs() <= 1e-12 * base.max(1.0));

            let flipped = w_h(&f, scale3(lam, -1.0), h, &m).unwrap();
            assert_eq!(flipped, base);
        }
    }
}
