//! Total arc length of the displacement field.
//!
//! At one path point the arc length rate is the volume-weighted root mean
//! square of the nodal trajectory speeds,
//! `s_u = sqrt( sum_k (V_k / V) sum_i (dD_ik/ds)^2 )`.
//! Its gradient has a 1/s_u singularity at stationary segments, which is
//! regularized by a floor value used in all divisions.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and (low-rank) Hessian of the total arc length with
/// respect to the parameter derivatives of the spatial dofs.
///
/// The Hessian is `(diag(w) - grad grad^T) / s_u`, a scaled projector; it is
/// kept in this factored form instead of a dense n_dof^2 array.
#[derive(Debug, Clone)]
pub struct ArcLengthState {
    /// The arc length rate itself (not floored).
    pub s_u: f64,
    /// d s_u / d D_{,s}, computed with the floored value.
    pub grad: DVector<f64>,
    /// True when the floor was active (stationary segment).
    pub floored: bool,
    weights: DVector<f64>,
    s_div: f64,
}

/// Evaluate the arc length state. `weights[i] = V_k / V` for the node owning
/// dof `i`; `floor` regularizes stationary segments.
pub fn arc_length_state(d_s: &DVector<f64>, weights: &DVector<f64>, floor: f64) -> ArcLengthState {
    debug_assert_eq!(d_s.len(), weights.len());
    let sq: f64 = d_s
        .iter()
        .zip(weights.iter())
        .map(|(d, w)| w * d * d)
        .sum();
    let s_u = sq.sqrt();
    let floored = s_u < floor;
    let s_div = if floored { floor } else { s_u };
    let grad = DVector::from_iterator(
        d_s.len(),
        d_s.iter().zip(weights.iter()).map(|(d, w)| w * d / s_div),
    );
    ArcLengthState {
        s_u,
        grad,
        floored,
        weights: weights.clone(),
        s_div,
    }
}

impl ArcLengthState {
    /// Hessian-vector product without forming the dense matrix.
    pub fn hess_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let gx = self.grad.dot(x);
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.weights.iter())
                .zip(self.grad.iter())
                .map(|((x, w), g)| (w * x - g * gx) / self.s_div),
        )
    }

    /// Add `c * Hessian` into the block of `k` starting at (row0, col0).
    pub fn add_scaled_hessian_to(&self, c: f64, k: &mut DMatrix<f64>, row0: usize, col0: usize) {
        let n = self.grad.len();
        let cs = c / self.s_div;
        for i in 0..n {
            k[(row0 + i, col0 + i)] += cs * self.weights[i];
            let gi = self.grad[i];
            for j in 0..n {
                k[(row0 + i, col0 + j)] -= cs * gi * self.grad[j];
            }
        }
    }

    /// Dense Hessian (for tests and finite-difference checks).
    pub fn hess_dense(&self) -> DMatrix<f64> {
        let n = self.grad.len();
        let mut h = DMatrix::zeros(n, n);
        self.add_scaled_hessian_to(1.0, &mut h, 0, 0);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_node_is_the_euclidean_norm() {
        // One node owning the entire volume.
        let d = DVector::from_vec(vec![3.0, 4.0]);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let a = arc_length_state(&d, &w, 1e-12);
        assert!((a.s_u - 5.0).abs() < 1e-15);
        assert!((a.grad[0] - 0.6).abs() < 1e-15);
        assert!((a.grad[1] - 0.8).abs() < 1e-15);
        assert!(!a.floored);
    }

    #[test]
    fn stationary_segment_is_floored() {
        let d = DVector::zeros(4);
        let w = DVector::from_element(4, 0.25);
        let a = arc_length_state(&d, &w, 1e-10);
        assert_eq!(a.s_u, 0.0);
        assert!(a.floored);
        assert!(a.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let d = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.1, -0.4, 0.9]);
        let w = DVector::from_vec(vec![0.2, 0.2, 0.15, 0.15, 0.15, 0.15]);
        let a = arc_length_state(&d, &w, 1e-12);
        let h = 1e-6;
        for i in 0..6 {
            let mut dp = d.clone();
            dp[i] += h;
            let sp = arc_length_state(&dp, &w, 1e-12).s_u;
            dp[i] -= 2.0 * h;
            let sm = arc_length_state(&dp, &w, 1e-12).s_u;
            let fd = (sp - sm) / (2.0 * h);
            assert!((fd - a.grad[i]).abs() < 1e-6, "grad[{i}]");

            dp[i] = d[i] + h;
            let gp = arc_length_state(&dp, &w, 1e-12).grad;
            dp[i] = d[i] - h;
            let gm = arc_length_state(&dp, &w, 1e-12).grad;
            let fd_col = (gp - gm) / (2.0 * h);
            let hess = a.hess_dense();
            for j in 0..6 {
                assert!(
                    (fd_col[j] - hess[(j, i)]).abs() < 1e-6,
                    "hess[{j},{i}]: {} vs {}",
                    hess[(j, i)],
                    fd_col[j]
                );
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity_and_euler_identities(
            raw in proptest::collection::vec(-5.0..5.0f64, 6),
            c in 0.1..10.0f64,
        ) {
            let d = DVector::from_vec(raw);
            prop_assume!(d.norm() > 1e-3);
            let w = DVector::from_vec(vec![0.3, 0.3, 0.1, 0.1, 0.1, 0.1]);
            let a = arc_length_state(&d, &w, 1e-15);
            let scaled = arc_length_state(&(&d * c), &w, 1e-15);
            // Positive homogeneity of degree one.
            prop_assert!((scaled.s_u - c * a.s_u).abs() < 1e-12 * scaled.s_u.max(1.0));
            // Euler's theorem: grad . d = s_u, and the Hessian annihilates d.
            prop_assert!((a.grad.dot(&d) - a.s_u).abs() < 1e-12 * a.s_u);
            prop_assert!(a.hess_apply(&d).norm() < 1e-11);
            // Hessian is symmetric by construction.
            let h = a.hess_dense();
            prop_assert!((&h - h.transpose()).amax() < 1e-14 * h.amax().max(1.0));
        }
    }
}
