//! One-dimensional discretization of the motion.
//!
//! The motion parameter is the normalized arc length `s` in [0, 1]. Path
//! nodes (Lagrange) or control points (B-spline) each carry a full spatial
//! configuration; shape functions interpolate between configurations.

mod arclength;
mod basis;

pub use arclength::{arc_length_state, ArcLengthState};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

/// Shape function family of the path discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Lagrange,
    BSpline,
}

/// User-facing path discretization spec, as written in the problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMesh {
    #[serde(rename = "type")]
    pub kind: PathKind,
    pub degree: usize,
    pub n_elements: usize,
    /// Breakpoint ids (1..n_elements-1) where continuity is reduced to C0.
    /// Only meaningful for B-splines; Lagrange discretizations are C0 at
    /// every breakpoint already.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuity_reductions: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path degree must be at least 1")]
    DegreeZero,
    #[error("path needs at least one element")]
    NoElements,
    #[error("continuity reduction at breakpoint {0} is outside 1..{1}")]
    ReductionOutOfRange(usize, usize),
    #[error("duplicate continuity reduction at breakpoint {0}")]
    DuplicateReduction(usize),
    #[error(
        "breakpoint {0} is not interpolatory; a configuration there requires a \
         C0 continuity reduction at that path node"
    )]
    NotInterpolatory(usize),
    #[error("path parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
}

/// Shape function values at one path parameter.
#[derive(Debug, Clone)]
pub struct ShapeEval {
    /// Element that owns the evaluation point.
    pub element: usize,
    /// Global ids of the path nodes with support here.
    pub nodes: Vec<usize>,
    /// Shape function values (partition of unity).
    pub n: Vec<f64>,
    /// Derivatives with respect to the global parameter.
    pub dn: Vec<f64>,
}

/// Built path discretization: breakpoints, node layout, quadrature.
#[derive(Debug, Clone)]
pub struct PathSpace {
    pub kind: PathKind,
    pub degree: usize,
    n_elements: usize,
    breakpoints: Vec<f64>,
    /// Open knot vector (B-spline only).
    knots: Vec<f64>,
    n_nodes: usize,
    greville: Vec<f64>,
    /// Per element: (point, weight) pairs in global parameter space; weights
    /// sum to the element width.
    quadrature: Vec<Vec<(f64, f64)>>,
}

impl PathSpace {
    pub fn build(spec: &PathMesh) -> Result<Self, PathError> {
        if spec.degree == 0 {
            return Err(PathError::DegreeZero);
        }
        if spec.n_elements == 0 {
            return Err(PathError::NoElements);
        }
        let n = spec.n_elements;
        let p = spec.degree;
        let mut seen = vec![false; n + 1];
        for &r in &spec.continuity_reductions {
            if r == 0 || r >= n {
                return Err(PathError::ReductionOutOfRange(r, n));
            }
            if seen[r] {
                return Err(PathError::DuplicateReduction(r));
            }
            seen[r] = true;
        }
        let breakpoints: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();

        let (knots, n_nodes, greville) = match spec.kind {
            PathKind::Lagrange => {
                let n_nodes = n * p + 1;
                let mut greville = Vec::with_capacity(n_nodes);
                for e in 0..n {
                    let (a, b) = (breakpoints[e], breakpoints[e + 1]);
                    for j in 0..p {
                        greville.push(a + (b - a) * j as f64 / p as f64);
                    }
                    if e == n - 1 {
                        greville.push(b);
                    }
                }
                (Vec::new(), n_nodes, greville)
            }
            PathKind::BSpline => {
                let mut knots = vec![0.0; p + 1];
                for (i, &b) in breakpoints.iter().enumerate().take(n).skip(1) {
                    let mult = if seen[i] { p } else { 1 };
                    knots.extend(std::iter::repeat_n(b, mult));
                }
                knots.extend(std::iter::repeat_n(1.0, p + 1));
                let n_nodes = knots.len() - p - 1;
                let greville = (0..n_nodes)
                    .map(|j| knots[j + 1..=j + p].iter().sum::<f64>() / p as f64)
                    .collect();
                (knots, n_nodes, greville)
            }
        };

        let (gp, gw) = gauss_legendre(p + 1);
        let quadrature = (0..n)
            .map(|e| {
                let (a, b) = (breakpoints[e], breakpoints[e + 1]);
                let h = b - a;
                gp.iter()
                    .zip(&gw)
                    .map(|(&x, &w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
                    .collect()
            })
            .collect();

        Ok(Self {
            kind: spec.kind,
            degree: p,
            n_elements: n,
            breakpoints,
            knots,
            n_nodes,
            greville,
            quadrature,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Number of path nodes (Lagrange) or control points (B-spline).
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Greville abscissa of a path node: the parameter at which the node's
    /// coefficient is most representative. For Lagrange nodes this is the
    /// node position itself, and linear functions of the parameter are
    /// reproduced exactly by sampling coefficients here for both families.
    pub fn greville(&self, node: usize) -> f64 {
        self.greville[node]
    }

    pub fn quadrature(&self, element: usize) -> &[(f64, f64)] {
        &self.quadrature[element]
    }

    /// Replace one element's quadrature by the same Gauss rule applied on
    /// `parts` equal sub-intervals. Used where the integrand has an
    /// integrable endpoint singularity (the zero-speed start of a descent
    /// curve).
    pub fn refine_element_quadrature(&mut self, element: usize, parts: usize) {
        let (a, b) = (self.breakpoints[element], self.breakpoints[element + 1]);
        let (gp, gw) = gauss_legendre(self.degree + 1);
        let h = (b - a) / parts as f64;
        let mut rule = Vec::with_capacity(parts * gp.len());
        for part in 0..parts {
            let lo = a + part as f64 * h;
            for (&x, &w) in gp.iter().zip(&gw) {
                rule.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        self.quadrature[element] = rule;
    }

    /// Element owning parameter `s` (half-open intervals, last one closed).
    pub fn element_of(&self, s: f64) -> Result<usize, PathError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(PathError::ParameterOutOfRange(s));
        }
        let e = ((s * self.n_elements as f64).floor() as usize).min(self.n_elements - 1);
        Ok(e)
    }

    /// Shape functions and their parameter derivatives at `s`.
    pub fn eval(&self, s: f64) -> Result<ShapeEval, PathError> {
        let element = self.element_of(s)?;
        Ok(self.eval_in_element(element, s))
    }

    /// Shape functions at `s`, forcing the evaluation into `element`
    /// (used at element boundaries where the derivative is one-sided).
    pub fn eval_in_element(&self, element: usize, s: f64) -> ShapeEval {
        match self.kind {
            PathKind::Lagrange => {
                let p = self.degree;
                let (a, b) = (self.breakpoints[element], self.breakpoints[element + 1]);
                let h = b - a;
                let t = (s - a) / h;
                let (n, mut dn) = basis::lagrange(p, t);
                for d in &mut dn {
                    *d /= h;
                }
                ShapeEval {
                    element,
                    nodes: (element * p..=element * p + p).collect(),
                    n,
                    dn,
                }
            }
            PathKind::BSpline => {
                let p = self.degree;
                let span = basis::find_span(self.n_nodes - 1, p, s, &self.knots);
                let (n, dn) = basis::bspline_with_derivative(span, s, p, &self.knots);
                ShapeEval {
                    element,
                    nodes: (span - p..=span).collect(),
                    n,
                    dn,
                }
            }
        }
    }

    /// Path node whose coefficient equals the interpolated configuration at
    /// breakpoint `b`. Ends are always interpolatory; interior breakpoints of
    /// a B-spline require a C0 reduction there.
    pub fn interpolatory_node(&self, b: usize) -> Result<usize, PathError> {
        match self.kind {
            PathKind::Lagrange => Ok(b * self.degree),
            PathKind::BSpline => {
                if b == 0 {
                    return Ok(0);
                }
                if b == self.n_elements {
                    return Ok(self.n_nodes - 1);
                }
                let z = self.breakpoints[b];
                let p = self.degree;
                for j in 0..self.n_nodes {
                    if self.knots[j + 1..=j + p].iter().all(|&k| k == z) {
                        return Ok(j);
                    }
                }
                Err(PathError::NotInterpolatory(b))
            }
        }
    }

    /// Curve value of a discretized field at parameter `s`.
    /// `coeffs[node * stride + c]` holds component `c` of the node.
    pub fn interpolate(&self, coeffs: &DVector<f64>, stride: usize, s: f64) -> DVector<f64> {
        let sh = self.eval(s).expect("parameter in range");
        let mut out = DVector::zeros(stride);
        for (idx, &node) in sh.nodes.iter().enumerate() {
            for c in 0..stride {
                out[c] += sh.n[idx] * coeffs[node * stride + c];
            }
        }
        out
    }
}

/// Integrated arc length of one path element together with its gradient with
/// respect to all path degrees of freedom.
///
/// `weights` are the tributary volume fractions per spatial dof, `floor` the
/// regularization floor for stationary segments.
pub fn path_element_length(
    space: &PathSpace,
    weights: &DVector<f64>,
    floor: f64,
    d_bar: &DVector<f64>,
    element: usize,
) -> (f64, DVector<f64>) {
    let n_dof = weights.len();
    let mut length = 0.0;
    let mut grad = DVector::zeros(d_bar.len());
    for &(s, w) in space.quadrature(element) {
        let sh = space.eval_in_element(element, s);
        let mut d_s = DVector::zeros(n_dof);
        for (idx, &node) in sh.nodes.iter().enumerate() {
            for i in 0..n_dof {
                d_s[i] += sh.dn[idx] * d_bar[node * n_dof + i];
            }
        }
        let arc = arc_length_state(&d_s, weights, floor);
        length += w * arc.s_u;
        for (idx, &node) in sh.nodes.iter().enumerate() {
            let c = w * sh.dn[idx];
            for i in 0..n_dof {
                grad[node * n_dof + i] += c * arc.grad[i];
            }
        }
    }
    (length, grad)
}

/// The global unknown vector: all spatial dofs at every path node, plus the
/// Lagrange multipliers of the equal-length regularization (empty otherwise).
#[derive(Debug, Clone)]
pub struct MotionState {
    pub d_bar: DVector<f64>,
    pub multipliers: DVector<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(kind: PathKind, degree: usize, n: usize) -> PathSpace {
        PathSpace::build(&PathMesh {
            kind,
            degree,
            n_elements: n,
            continuity_reductions: vec![],
        })
        .unwrap()
    }

    #[test]
    fn linear_lagrange_midpoint() {
        let sp = space(PathKind::Lagrange, 1, 1);
        let sh = sp.eval(0.5).unwrap();
        assert_eq!(sh.nodes, vec![0, 1]);
        assert!((sh.n[0] - 0.5).abs() < 1e-15 && (sh.n[1] - 0.5).abs() < 1e-15);
        assert!((sh.dn[0] + 1.0).abs() < 1e-15 && (sh.dn[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamped_cubic_bspline_interpolates_the_start() {
        let sp = space(PathKind::BSpline, 3, 4);
        let sh = sp.eval(0.0).unwrap();
        assert!((sh.n[0] - 1.0).abs() < 1e-15);
        for &v in &sh.n[1..] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn node_counts() {
        assert_eq!(space(PathKind::Lagrange, 1, 14).n_nodes(), 15);
        assert_eq!(space(PathKind::Lagrange, 2, 6).n_nodes(), 13);
        assert_eq!(space(PathKind::BSpline, 2, 6).n_nodes(), 8);
        assert_eq!(space(PathKind::BSpline, 3, 5).n_nodes(), 8);
    }

    #[test]
    fn continuity_reduction_adds_interpolatory_node() {
        let sp = PathSpace::build(&PathMesh {
            kind: PathKind::BSpline,
            degree: 2,
            n_elements: 6,
            continuity_reductions: vec![3],
        })
        .unwrap();
        assert_eq!(sp.n_nodes(), 9);
        let j = sp.interpolatory_node(3).unwrap();
        assert!((sp.greville(j) - 0.5).abs() < 1e-15);
        // The curve actually passes through that coefficient.
        let mut coeffs = DVector::zeros(sp.n_nodes());
        coeffs[j] = 1.0;
        let v = sp.interpolate(&coeffs, 1, 0.5);
        assert!((v[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interior_breakpoint_without_reduction_is_not_interpolatory() {
        let sp = space(PathKind::BSpline, 2, 6);
        assert!(matches!(
            sp.interpolatory_node(3),
            Err(PathError::NotInterpolatory(3))
        ));
    }

    #[test]
    fn lagrange_breakpoints_are_interpolatory() {
        let sp = space(PathKind::Lagrange, 2, 6);
        for b in 0..=6 {
            let j = sp.interpolatory_node(b).unwrap();
            assert!((sp.greville(j) - b as f64 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn greville_sampling_reproduces_linear_functions() {
        for kind in [PathKind::Lagrange, PathKind::BSpline] {
            for degree in 1..=3 {
                let sp = space(kind, degree, 5);
                let coeffs =
                    DVector::from_iterator(sp.n_nodes(), (0..sp.n_nodes()).map(|j| 2.0 + 3.0 * sp.greville(j)));
                for s in [0.0, 0.17, 0.5, 0.83, 1.0] {
                    let v = sp.interpolate(&coeffs, 1, s);
                    assert!(
                        (v[0] - (2.0 + 3.0 * s)).abs() < 1e-12,
                        "{kind:?} p={degree} s={s}: {}",
                        v[0]
                    );
                }
            }
        }
    }

    #[test]
    fn quadrature_weights_cover_the_domain() {
        let sp = space(PathKind::BSpline, 3, 7);
        let total: f64 = (0..7).flat_map(|e| sp.quadrature(e)).map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn partition_of_unity(
            s in 0.0..=1.0f64,
            degree in 1usize..=4,
            n in 1usize..=8,
            bspline in proptest::bool::ANY,
        ) {
            let kind = if bspline { PathKind::BSpline } else { PathKind::Lagrange };
            let sp = space(kind, degree, n);
            let sh = sp.eval(s).unwrap();
            let sum: f64 = sh.n.iter().sum();
            let dsum: f64 = sh.dn.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-14);
            prop_assert!(dsum.abs() < 1e-11 * (n * degree) as f64);
        }
    }

    #[test]
    fn element_length_gradient_matches_finite_differences() {
        let sp = space(PathKind::BSpline, 2, 3);
        let n_dof = 2;
        let weights = DVector::from_vec(vec![0.3, 0.7]);
        let total = sp.n_nodes() * n_dof;
        let d_bar = DVector::from_iterator(
            total,
            (0..total).map(|i| ((i * 37 + 11) % 17) as f64 / 7.0 - 1.0),
        );
        let (_, grad) = path_element_length(&sp, &weights, 1e-12, &d_bar, 1);
        let h = 1e-6;
        for i in 0..total {
            let mut dp = d_bar.clone();
            dp[i] += h;
            let (lp, _) = path_element_length(&sp, &weights, 1e-12, &dp, 1);
            dp[i] -= 2.0 * h;
            let (lm, _) = path_element_length(&sp, &weights, 1e-12, &dp, 1);
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * grad.amax().max(1.0),
                "dof {i}: fd {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn element_lengths_sum_to_total_path_length() {
        let sp = space(PathKind::Lagrange, 2, 4);
        
        let weights = DVector::from_element(1, 1.0);
        let d_bar = DVector::from_iterator(
            sp.n_nodes(),
            (0..sp.n_nodes()).map(|i| (i as f64 * 0.73).sin()),
        );
        let per_element: f64 = (0..4)
            .map(|e| path_element_length(&sp, &weights, 1e-12, &d_bar, e).0)
            .sum();
        // Total by the same quadrature, summed in one pass.
        let mut total = 0.0;
        for e in 0..4 {
            for &(s, w) in sp.quadrature(e) {
                let sh = sp.eval_in_element(e, s);
                let mut d_s = 0.0;
                for (idx, &node) in sh.nodes.iter().enumerate() {
                    d_s += sh.dn[idx] * d_bar[node];
                }
                total += w * d_s.abs();
            }
        }
        assert!((per_element - total).abs() < 1e-13);
    }

    #[test]
    fn uniform_motion_gives_equal_element_lengths() {
        let sp = space(PathKind::Lagrange, 1, 2);
        let weights = DVector::from_element(2, 0.5);
        // One node translating along a straight line at constant rate.
        let d_bar = DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
        let (l1, _) = path_element_length(&sp, &weights, 1e-12, &d_bar, 0);
        let (l2, _) = path_element_length(&sp, &weights, 1e-12, &d_bar, 1);
        assert!((l1 - l2).abs() < 1e-15);
    }

    #[test]
    fn frozen_element_has_zero_length() {
        let sp = space(PathKind::Lagrange, 1, 2);
        let weights = DVector::from_element(2, 0.5);
        let d_bar = DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5, 0.5, 0.5]);
        let (l2, _) = path_element_length(&sp, &weights, 1e-12, &d_bar, 1);
        assert_eq!(l2, 0.0);
    }
}
