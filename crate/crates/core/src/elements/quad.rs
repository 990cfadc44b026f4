//! Bilinear plane-stress quadrilateral, displacement-based and with a
//! four-mode enhanced assumed strain (EAS) variant.
//!
//! Kinematics are total-Lagrangian with Green-Lagrange strain; the enhanced
//! strain field is added directly to the Green-Lagrange strain, which keeps
//! the element energy quadratic in the internal parameters and lets the local
//! condensation converge in a single Newton step.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};

use super::{ElementError, ElementState};
use crate::model::Material;

const GP: [f64; 2] = [-0.577_350_269_189_625_7, 0.577_350_269_189_625_7];

/// Four enhanced strain parameters of one EAS element.
#[derive(Debug, Clone, Default)]
pub struct EasParameters {
    pub alpha: [f64; 4],
}

/// Displacement-based bilinear quad, 2x2 Gauss quadrature.
pub fn quad_state(x: &[&[f64]], d: &[f64], mat: &Material) -> Result<ElementState, ElementError> {
    let (state, _) = integrate_quad(x, d, mat, false)?;
    Ok(state)
}

/// Bilinear quad enhanced with the classical four incompatible strain modes,
/// statically condensed at the element level.
pub fn eas_quad_state(
    x: &[&[f64]],
    d: &[f64],
    mat: &Material,
) -> Result<ElementState, ElementError> {
    let (state, _) = integrate_quad(x, d, mat, true)?;
    Ok(state)
}

/// Like [`eas_quad_state`] but also reporting the condensed parameters.
pub fn eas_quad_state_with_params(
    x: &[&[f64]],
    d: &[f64],
    mat: &Material,
) -> Result<(ElementState, EasParameters), ElementError> {
    integrate_quad(x, d, mat, true)
}

/// In-plane area of the quad by 2x2 Gauss integration of the Jacobian.
pub fn quad_volume(x: &[&[f64]]) -> f64 {
    let mut area = 0.0;
    for &xi in &GP {
        for &eta in &GP {
            let (j, _) = jacobian(x, xi, eta);
            area += j.determinant();
        }
    }
    area
}

/// Bilinear shape function derivatives with respect to (xi, eta).
fn dshape(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

fn jacobian(x: &[&[f64]], xi: f64, eta: f64) -> (Matrix2<f64>, [[f64; 2]; 4]) {
    let dn = dshape(xi, eta);
    let mut j = Matrix2::zeros();
    for k in 0..4 {
        for a in 0..2 {
            for b in 0..2 {
                j[(a, b)] += x[k][a] * dn[k][b];
            }
        }
    }
    (j, dn)
}

/// Plane-stress St. Venant-Kirchhoff matrix on [E11, E22, 2 E12].
fn constitutive(e_mod: f64, nu: f64) -> Matrix3<f64> {
    let f = e_mod / (1.0 - nu * nu);
    Matrix3::new(
        f,
        f * nu,
        0.0,
        f * nu,
        f,
        0.0,
        0.0,
        0.0,
        f * (1.0 - nu) / 2.0,
    )
}

/// Covariant-to-cartesian transform for strain vectors [E11, E22, 2 E12],
/// built from the inverse center Jacobian.
fn strain_transform(a: &Matrix2<f64>) -> Matrix3<f64> {
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    Matrix3::new(
        a11 * a11,
        a21 * a21,
        a11 * a21,
        a12 * a12,
        a22 * a22,
        a12 * a22,
        2.0 * a11 * a12,
        2.0 * a21 * a22,
        a11 * a22 + a21 * a12,
    )
}

struct GaussData {
    weight: f64, // w * t * det J
    grad: [[f64; 2]; 4],
    e_compat: Vector3<f64>,
    b: DMatrix<f64>,     // 3 x 8
    m_enh: DMatrix<f64>, // 3 x 4
}

fn integrate_quad(
    x: &[&[f64]],
    d: &[f64],
    mat: &Material,
    enhanced: bool,
) -> Result<(ElementState, EasParameters), ElementError> {
    let nu = mat
        .poisson_ratio
        .ok_or(ElementError::MissingMaterialParameter("Poisson's ratio"))?;
    let t = mat
        .thickness
        .ok_or(ElementError::MissingMaterialParameter("thickness"))?;
    let c = constitutive(mat.youngs_modulus, nu);

    // Center Jacobian for the enhanced-mode transformation.
    let (j0, _) = jacobian(x, 0.0, 0.0);
    let det_j0 = j0.determinant();
    if det_j0 <= 0.0 {
        return Err(ElementError::InvertedQuad { det: det_j0 });
    }
    let a0 = j0.try_inverse().expect("checked determinant");
    let t0 = strain_transform(&a0);

    let mut gps = Vec::with_capacity(4);
    for &xi in &GP {
        for &eta in &GP {
            let (j, dn) = jacobian(x, xi, eta);
            let det = j.determinant();
            if det <= 0.0 {
                return Err(ElementError::InvertedQuad { det });
            }
            let inv_t = j.try_inverse().expect("checked determinant").transpose();
            let mut grad = [[0.0; 2]; 4];
            for k in 0..4 {
                for a in 0..2 {
                    grad[k][a] = inv_t[(a, 0)] * dn[k][0] + inv_t[(a, 1)] * dn[k][1];
                }
            }
            // Deformation gradient F = I + d grad(N)^T.
            let mut f: Matrix2<f64> = Matrix2::identity();
            for k in 0..4 {
                for a in 0..2 {
                    for b in 0..2 {
                        f[(a, b)] += d[2 * k + a] * grad[k][b];
                    }
                }
            }
            let cg: Matrix2<f64> = f.transpose() * f;
            let e_compat = Vector3::new(
                0.5 * (cg[(0, 0)] - 1.0),
                0.5 * (cg[(1, 1)] - 1.0),
                cg[(0, 1)],
            );
            let mut b = DMatrix::zeros(3, 8);
            for k in 0..4 {
                let (g0, g1) = (grad[k][0], grad[k][1]);
                for a in 0..2 {
                    b[(0, 2 * k + a)] = f[(a, 0)] * g0;
                    b[(1, 2 * k + a)] = f[(a, 1)] * g1;
                    b[(2, 2 * k + a)] = f[(a, 0)] * g1 + f[(a, 1)] * g0;
                }
            }
            let mut m_enh = DMatrix::zeros(3, 4);
            if enhanced {
                // Natural modes [[xi,0,0,0],[0,eta,0,0],[0,0,xi,eta]],
                // mapped with the center Jacobian and scaled by detJ0/detJ.
                let s = det_j0 / det;
                let m_nat =
                    DMatrix::from_row_slice(3, 4, &[xi, 0.0, 0.0, 0.0, 0.0, eta, 0.0, 0.0, 0.0, 0.0, xi, eta]);
                m_enh = DMatrix::from_fn(3, 4, |r, c| {
                    s * (t0[(r, 0)] * m_nat[(0, c)]
                        + t0[(r, 1)] * m_nat[(1, c)]
                        + t0[(r, 2)] * m_nat[(2, c)])
                });
            }
            gps.push(GaussData {
                weight: t * det,
                grad,
                e_compat,
                b,
                m_enh,
            });
        }
    }

    let mut params = EasParameters::default();
    if enhanced {
        condense(&gps, &c, &mut params)?;
    }
    let alpha = DVector::from_row_slice(&params.alpha);

    let mut energy = 0.0;
    let mut f_int = DVector::zeros(8);
    let mut k_dd = DMatrix::zeros(8, 8);
    let mut k_da = DMatrix::zeros(8, 4);
    let mut k_aa = DMatrix::zeros(4, 4);
    for gp in &gps {
        let e_tot = if enhanced {
            gp.e_compat + Vector3::from_iterator((&gp.m_enh * &alpha).iter().copied())
        } else {
            gp.e_compat
        };
        let s = c * e_tot;
        energy += 0.5 * gp.weight * e_tot.dot(&s);
        f_int += gp.b.transpose() * Vector3::from(s) * gp.weight;

        let cb = {
            let mut cb = DMatrix::zeros(3, 8);
            for col in 0..8 {
                for r in 0..3 {
                    cb[(r, col)] =
                        c[(r, 0)] * gp.b[(0, col)] + c[(r, 1)] * gp.b[(1, col)] + c[(r, 2)] * gp.b[(2, col)];
                }
            }
            cb
        };
        k_dd += gp.b.transpose() * &cb * gp.weight;
        // Geometric stiffness from the (total) second Piola-Kirchhoff stress.
        let s_mat = Matrix2::new(s[0], s[2], s[2], s[1]);
        for k in 0..4 {
            for l in 0..4 {
                let mut v = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        v += gp.grad[k][a] * s_mat[(a, b)] * gp.grad[l][b];
                    }
                }
                let v = v * gp.weight;
                k_dd[(2 * k, 2 * l)] += v;
                k_dd[(2 * k + 1, 2 * l + 1)] += v;
            }
        }
        if enhanced {
            k_da += gp.b.transpose() * c * &gp.m_enh * gp.weight;
            k_aa += gp.m_enh.transpose() * c * &gp.m_enh * gp.weight;
        }
    }

    let k_t = if enhanced {
        let inv = k_aa
            .lu()
            .solve(&k_da.transpose())
            .ok_or(ElementError::CondensationDiverged(0))?;
        k_dd - &k_da * inv
    } else {
        k_dd
    };

    Ok((ElementState { energy, f_int, k_t }, params))
}

/// Solve the element-local stationarity condition for the enhanced
/// parameters. The energy is quadratic in alpha, so Newton converges in one
/// step; iterating guards against ill-conditioned local systems.
fn condense(gps: &[GaussData], c: &Matrix3<f64>, params: &mut EasParameters) -> Result<(), ElementError> {
    const MAX_ITER: usize = 20;
    let mut k_aa = DMatrix::zeros(4, 4);
    let mut scale = 0.0;
    for gp in gps {
        k_aa += gp.m_enh.transpose() * c * &gp.m_enh * gp.weight;
        scale += gp.weight * c[(0, 0)];
    }
    let lu = k_aa.clone().lu();
    let mut alpha = DVector::zeros(4);
    let tol = 1e-12 * scale.max(1.0);
    for _ in 0..MAX_ITER {
        let mut r = DVector::zeros(4);
        for gp in gps {
            let e_tot = gp.e_compat + Vector3::from_iterator((&gp.m_enh * &alpha).iter().copied());
            r += gp.m_enh.transpose() * (c * e_tot) * gp.weight;
        }
        if r.norm() <= tol {
            params.alpha.copy_from_slice(alpha.as_slice());
            return Ok(());
        }
        let da = lu
            .solve(&(-&r))
            .ok_or(ElementError::CondensationDiverged(MAX_ITER))?;
        alpha += da;
    }
    Err(ElementError::CondensationDiverged(MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{fd_gradient, fd_jacobian};

    fn mat() -> Material {
        Material::plane_stress(30000.0, 0.3, 0.1)
    }

    fn unit_square() -> [[f64; 2]; 4] {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    fn refs(x: &[[f64; 2]; 4]) -> Vec<&[f64]> {
        x.iter().map(|c| c.as_slice()).collect()
    }

    #[test]
    fn undeformed_square_has_zero_energy() {
        let x = unit_square();
        let s = quad_state(&refs(&x), &[0.0; 8], &mat()).unwrap();
        assert_eq!(s.energy, 0.0);
        assert!(s.f_int.norm() < 1e-14);
    }

    #[test]
    fn rigid_translation_is_strain_free() {
        let x = unit_square();
        let c = 0.37;
        let d = [c; 8];
        let s = quad_state(&refs(&x), &d, &mat()).unwrap();
        assert!(s.energy.abs() < 1e-20);
        assert!(s.f_int.norm() < 1e-12);
    }

    #[test]
    fn rigid_rotation_is_strain_free() {
        let x = unit_square();
        let phi: f64 = 0.9;
        let (s, c) = phi.sin_cos();
        let mut d = [0.0; 8];
        for (k, xk) in x.iter().enumerate() {
            d[2 * k] = c * xk[0] - s * xk[1] - xk[0];
            d[2 * k + 1] = s * xk[0] + c * xk[1] - xk[1];
        }
        for state in [
            quad_state(&refs(&x), &d, &mat()).unwrap(),
            eas_quad_state(&refs(&x), &d, &mat()).unwrap(),
        ] {
            assert!(state.energy.abs() < 1e-12 * 30000.0 * 0.1);
            assert!(state.f_int.norm() < 1e-9);
        }
    }

    #[test]
    fn homogeneous_stretch_matches_closed_form() {
        // u_x = 0.01 X_x: constant E11 = 0.01 + 0.5e-4, volume = 0.1.
        let x = unit_square();
        let mut d = [0.0; 8];
        for (k, xk) in x.iter().enumerate() {
            d[2 * k] = 0.01 * xk[0];
        }
        let e11: f64 = 0.01 + 0.5 * 0.01 * 0.01;
        let c11 = 30000.0 / (1.0 - 0.09);
        let expected = 0.5 * c11 * e11 * e11 * 0.1;
        let s = quad_state(&refs(&x), &d, &mat()).unwrap();
        assert!(
            (s.energy - expected).abs() < 1e-12 * expected,
            "energy {} vs {}",
            s.energy,
            expected
        );
        let fd = fd_gradient(
            &|d| quad_state(&refs(&x), d, &mat()).unwrap().energy,
            &d,
            1e-6,
        );
        let rel = (&s.f_int - &fd).norm() / s.f_int.norm();
        assert!(rel < 1e-6, "force FD error {rel}");
    }

    #[test]
    fn derivatives_match_finite_differences_on_distorted_quad() {
        let x = [[0.0, 0.0], [1.2, 0.1], [0.9, 1.1], [-0.1, 0.8]];
        let d = [0.03, -0.02, 0.05, 0.04, -0.01, 0.06, 0.02, -0.03];
        for enhanced in [false, true] {
            let eval = |d: &[f64]| {
                if enhanced {
                    eas_quad_state(&refs(&x), d, &mat()).unwrap()
                } else {
                    quad_state(&refs(&x), d, &mat()).unwrap()
                }
            };
            let s = eval(&d);
            let fd_f = fd_gradient(&|d| eval(d).energy, &d, 1e-6);
            let rel = (&s.f_int - &fd_f).norm() / s.f_int.norm().max(1.0);
            assert!(rel < 1e-6, "enhanced={enhanced} force FD error {rel}");
            let fd_k = fd_jacobian(&|d| eval(d).f_int, &d, 1e-6);
            let rel = (&s.k_t - &fd_k).norm() / s.k_t.norm();
            assert!(rel < 1e-5, "enhanced={enhanced} stiffness FD error {rel}");
            let asym = (&s.k_t - s.k_t.transpose()).amax();
            assert!(asym < 1e-12 * s.k_t.amax());
        }
    }

    #[test]
    fn constant_strain_keeps_enhanced_modes_silent() {
        // Homogeneous stretch on a distorted element: alpha must vanish and
        // the EAS state must coincide with the displacement-based one.
        let x = [[0.0, 0.0], [1.1, 0.2], [1.3, 1.2], [0.1, 0.9]];
        let mut d = [0.0; 8];
        for (k, xk) in x.iter().enumerate() {
            d[2 * k] = 0.01 * xk[0];
            d[2 * k + 1] = -0.004 * xk[1];
        }
        let (eas, params) = eas_quad_state_with_params(&refs(&x), &d, &mat()).unwrap();
        let q1 = quad_state(&refs(&x), &d, &mat()).unwrap();
        for a in params.alpha {
            assert!(a.abs() < 1e-12, "alpha = {a}");
        }
        assert!((eas.energy - q1.energy).abs() < 1e-12 * q1.energy.abs().max(1.0));
        assert!((&eas.f_int - &q1.f_int).norm() < 1e-9);
    }

    #[test]
    fn zero_displacement_gives_zero_alpha() {
        let x = unit_square();
        let (s, params) = eas_quad_state_with_params(&refs(&x), &[0.0; 8], &mat()).unwrap();
        assert_eq!(s.energy, 0.0);
        assert_eq!(params.alpha, [0.0; 4]);
    }

    #[test]
    fn bending_mode_is_softer_with_eas() {
        // In-plane bending pattern u_x ~ xi * eta on the unit square.
        let x = unit_square();
        let delta = 0.05;
        let d = [delta, 0.0, -delta, 0.0, delta, 0.0, -delta, 0.0];
        let q1 = quad_state(&refs(&x), &d, &mat()).unwrap();
        let eas = eas_quad_state(&refs(&x), &d, &mat()).unwrap();
        assert!(
            eas.energy < q1.energy,
            "EAS {} vs Q1 {}",
            eas.energy,
            q1.energy
        );
    }

    #[test]
    fn inverted_reference_is_rejected() {
        // Clockwise node ordering.
        let x = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        let r = quad_state(&refs(&x), &[0.0; 8], &mat());
        assert!(matches!(r, Err(ElementError::InvertedQuad { .. })));
    }
}
