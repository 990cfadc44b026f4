//! Geometrically nonlinear truss bar (2D and 3D).

use nalgebra::DVector;

use super::{ElementError, ElementState};
use crate::model::Material;

/// Energy, internal force and tangent stiffness of a two-node bar.
///
/// The Green-Lagrange strain of a bar depends on its length only,
/// `E = (l^2 - L^2) / (2 L^2)`, which makes the closed form exact (no
/// quadrature). Energy is `0.5 * E_mod * A * L * E^2`; force and stiffness are
/// its exact derivatives, the stiffness containing both the material and the
/// geometric part.
pub fn truss_state(x: &[&[f64]], d: &[f64], mat: &Material) -> Result<ElementState, ElementError> {
    let area = mat
        .area
        .ok_or(ElementError::MissingMaterialParameter("cross-section area"))?;
    let e_mod = mat.youngs_modulus;
    let dim = x[0].len();
    debug_assert_eq!(d.len(), 2 * dim);

    // Reference and current chord vectors.
    let mut dx_ref = [0.0; 3];
    let mut dx_cur = [0.0; 3];
    for i in 0..dim {
        dx_ref[i] = x[1][i] - x[0][i];
        dx_cur[i] = dx_ref[i] + d[dim + i] - d[i];
    }
    let l0_sq: f64 = dx_ref[..dim].iter().map(|v| v * v).sum();
    if l0_sq == 0.0 {
        return Err(ElementError::DegenerateTruss);
    }
    let l0 = l0_sq.sqrt();
    let l_sq: f64 = dx_cur[..dim].iter().map(|v| v * v).sum();

    let strain = (l_sq - l0_sq) / (2.0 * l0_sq);
    let eal = e_mod * area * l0;
    let energy = 0.5 * eal * strain * strain;

    // dE/dd = g / L^2 with g = [-dx_cur; dx_cur].
    let n = 2 * dim;
    let mut g = DVector::zeros(n);
    for i in 0..dim {
        g[i] = -dx_cur[i];
        g[dim + i] = dx_cur[i];
    }
    let f_int = &g * (eal * strain / l0_sq);

    // k_t = EAL * (dE/dd)(dE/dd)^T + EAL * E * d2E/dd2,
    // with d2E/dd2 = [[I, -I], [-I, I]] / L^2.
    let mut k_t = &g * g.transpose() * (eal / (l0_sq * l0_sq));
    let geo = eal * strain / l0_sq;
    for i in 0..dim {
        k_t[(i, i)] += geo;
        k_t[(dim + i, dim + i)] += geo;
        k_t[(i, dim + i)] -= geo;
        k_t[(dim + i, i)] -= geo;
    }

    Ok(ElementState { energy, f_int, k_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{fd_gradient, fd_jacobian};

    fn mat() -> Material {
        Material::truss(30000.0, 0.1)
    }

    fn state(d: &[f64]) -> ElementState {
        let x0 = [0.0, 0.0];
        let x1 = [1.0, 0.0];
        truss_state(&[&x0, &x1], d, &mat()).unwrap()
    }

    #[test]
    fn reference_state_is_stress_free() {
        let s = state(&[0.0; 4]);
        assert_eq!(s.energy, 0.0);
        assert_eq!(s.f_int.norm(), 0.0);
    }

    #[test]
    fn hand_computed_stretch_energy() {
        // Tip displacement (0.1, 0): l = 1.1, E = 0.105,
        // energy = 0.5 * 30000 * 0.1 * 1 * 0.105^2 = 16.5375.
        let s = state(&[0.0, 0.0, 0.1, 0.0]);
        assert!((s.energy - 16.5375).abs() < 1e-10, "energy {}", s.energy);
    }

    #[test]
    fn rigid_rotation_carries_no_strain() {
        // Rotate the bar by 90 degrees about node 0: node 1 moves to (0, 1).
        let s = state(&[0.0, 0.0, -1.0, 1.0]);
        assert!(s.energy.abs() < 1e-12 * 30000.0 * 0.1);
        assert!(s.f_int.norm() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let d = [0.02, -0.01, 0.08, 0.05];
        let s = state(&d);
        let h = 1e-6;
        let fd_f = fd_gradient(&|d| state(d).energy, &d, h);
        let rel = (&s.f_int - &fd_f).norm() / s.f_int.norm().max(1.0);
        assert!(rel < 1e-6, "force FD error {rel}");

        let fd_k = fd_jacobian(&|d| state(d).f_int, &d, h);
        let rel = (&s.k_t - &fd_k).norm() / s.k_t.norm();
        assert!(rel < 1e-5, "stiffness FD error {rel}");
    }

    #[test]
    fn tangent_is_symmetric() {
        let s = state(&[0.3, -0.2, 0.1, 0.6]);
        let asym = (&s.k_t - s.k_t.transpose()).amax();
        assert!(asym < 1e-12 * s.k_t.amax());
    }

    #[test]
    fn three_dimensional_bar() {
        let x0 = [0.0, 0.0, 0.0];
        let x1 = [1.0, 1.0, 1.0];
        let d = [0.01, 0.0, -0.02, 0.05, 0.03, 0.04];
        let s = truss_state(&[&x0, &x1], &d, &mat()).unwrap();
        let f = |d: &[f64]| truss_state(&[&x0, &x1], d, &mat()).unwrap().energy;
        let fd_f = fd_gradient(&f, &d, 1e-6);
        let rel = (&s.f_int - &fd_f).norm() / s.f_int.norm().max(1.0);
        assert!(rel < 1e-6, "3D force FD error {rel}");
    }

    #[test]
    fn zero_length_bar_is_rejected() {
        let x = [1.0, 2.0];
        let r = truss_state(&[&x, &x], &[0.0; 4], &mat());
        assert!(matches!(r, Err(ElementError::DegenerateTruss)));
    }
}
