//! The Brachistochrone: fastest descent curve between two points.
//!
//! This module is the quantitative verification suite of the crate. The
//! exact solution is a cycloid whose constants follow from a two-variable
//! Newton solve of the boundary conditions; the finite element solution
//! discretizes the descent curve with the same path machinery used for
//! motion design, with travel time as the objective density and equal
//! element lengths enforced by Lagrange multipliers.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::functional::{FunctionalError, MotionSystem, Objective, ObjectiveEval};
use crate::pathspace::{PathMesh, PathSpace};
use crate::solver::{solve_motion, IterationRecord, SolveError, SolverConfig};

#[derive(Debug, Clone, Copy)]
pub struct BrachProblem {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub g: f64,
}

impl BrachProblem {
    fn span(&self) -> f64 {
        let dx = self.b.0 - self.a.0;
        let dy = self.b.1 - self.a.1;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Error)]
pub enum BrachError {
    #[error("degenerate problem: start and end coincide")]
    Degenerate,
    #[error("end point lies above the start; no descent curve exists")]
    EndAboveStart,
    #[error("gravity must be positive")]
    BadGravity,
    #[error("boundary Newton did not converge (best residual {0:.3e})")]
    NewtonDiverged(f64),
    #[error("curve rises above the start height at sample {index} (y = {y})")]
    CurveAboveStart { index: usize, y: f64 },
    #[error("curve does not run from A to B (endpoint off by {0:.3e})")]
    BadEndpoints(f64),
    #[error("zero-speed segment at the start height; travel time is unbounded")]
    ZeroSpeedSegment,
    #[error("finite element solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Exact cycloid through A and B: integration constants and the final roll
/// angle.
#[derive(Debug, Clone, Copy)]
pub struct CycloidSolution {
    pub c1: f64,
    pub c2: f64,
    pub t_end: f64,
    /// Rolling circle radius 1 / (4 g C1^2).
    pub radius: f64,
    y_a: f64,
    g: f64,
    mirrored: bool,
    x_a: f64,
}

impl CycloidSolution {
    /// Curve point at roll angle `t` in [0, t_end].
    pub fn point(&self, t: f64) -> (f64, f64) {
        let x = self.c2 + self.radius * (t - t.sin());
        let y = self.y_a - self.radius * (1.0 - t.cos());
        if self.mirrored {
            (2.0 * self.x_a - x, y)
        } else {
            (x, y)
        }
    }

    /// Exact travel time along the cycloid: time is proportional to the roll
    /// angle, `T = t_end / (2 g C1)`.
    pub fn travel_time(&self) -> f64 {
        self.t_end / (2.0 * self.g * self.c1)
    }

    /// Uniform samples in the roll angle, as (t, x, y) rows.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64, f64)> {
        (0..=n)
            .map(|i| {
                let t = self.t_end * i as f64 / n as f64;
                let (x, y) = self.point(t);
                (t, x, y)
            })
            .collect()
    }
}

/// Solve the boundary conditions for (C1, t_end) by a seeded two-variable
/// Newton iteration; C2 is the start abscissa.
pub fn solve_exact(problem: &BrachProblem) -> Result<CycloidSolution, BrachError> {
    if problem.g <= 0.0 {
        return Err(BrachError::BadGravity);
    }
    let (xa, ya) = problem.a;
    let (xb, yb) = problem.b;
    if xa == xb && ya == yb {
        return Err(BrachError::Degenerate);
    }
    if yb > ya {
        return Err(BrachError::EndAboveStart);
    }
    // The parametric form advances in +x; mirror when B lies to the left.
    let mirrored = xb < xa;
    let dx = (xb - xa).abs();
    let dy = ya - yb;
    let g = problem.g;
    let scale = problem.span();

    // Residuals of the boundary conditions at B for radius r = 1/(4 g c1^2).
    let residual = |c1: f64, t: f64| -> (f64, f64) {
        let r = 1.0 / (4.0 * g * c1 * c1);
        (r * (t - t.sin()) - dx, dy - r * (1.0 - t.cos()))
    };

    // Scan seeds over the roll angle; C1 from the y condition at each.
    let mut best = (f64::INFINITY, 0.1, std::f64::consts::PI);
    for i in 1..=16 {
        let t = 2.0 * std::f64::consts::PI * i as f64 / 17.0;
        let c1 = if dy > 1e-14 * scale {
            ((1.0 - t.cos()) / (4.0 * g * dy)).sqrt()
        } else {
            // Equal heights: radius from the x condition instead.
            let r = dx / (t - t.sin()).max(1e-9);
            (1.0 / (4.0 * g * r)).sqrt()
        };
        if !c1.is_finite() || c1 <= 0.0 {
            continue;
        }
        let (f1, f2) = residual(c1, t);
        let res = f1.hypot(f2);
        if res < best.0 {
            best = (res, c1, t);
        }
    }
    let (_, mut c1, mut t) = best;
    let mut last_res = f64::INFINITY;
    for _ in 0..200 {
        let (f1, f2) = residual(c1, t);
        last_res = f1.hypot(f2);
        if last_res < 1e-13 * scale {
            break;
        }
        let r = 1.0 / (4.0 * g * c1 * c1);
        let dr = -2.0 * r / c1;
        // Jacobian of the residuals in (c1, t).
        let j11 = dr * (t - t.sin());
        let j12 = r * (1.0 - t.cos());
        let j21 = -dr * (1.0 - t.cos());
        let j22 = -r * t.sin();
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return Err(BrachError::NewtonDiverged(last_res));
        }
        let dc1 = (-f1 * j22 + f2 * j12) / det;
        let dt = (-j11 * f2 + j21 * f1) / det;
        // Keep the iterate in the admissible quadrant.
        c1 = (c1 + dc1).max(1e-12);
        t = (t + dt).clamp(1e-9, 2.0 * std::f64::consts::PI);
    }
    if last_res >= 1e-10 * scale {
        return Err(BrachError::NewtonDiverged(last_res));
    }
    Ok(CycloidSolution {
        c1,
        c2: xa, // C2 = x(0) = x_A in solve coordinates
        t_end: t,
        radius: 1.0 / (4.0 * g * c1 * c1),
        y_a: ya,
        g,
        mirrored,
        x_a: xa,
    })
}

/// Travel time of a sampled curve from A to B under gravity.
///
/// Each polyline segment has height linear in arc length, so the time
/// integral has the closed form `2 d / (sqrt(2g) (sqrt(h0) + sqrt(h1)))`
/// per segment, which stays exact across the zero-speed singularity at the
/// start.
pub fn travel_time(curve: &[(f64, f64)], problem: &BrachProblem) -> Result<f64, BrachError> {
    let scale = problem.span();
    let tol = 1e-9 * scale;
    let first = curve.first().ok_or(BrachError::Degenerate)?;
    let last = curve.last().ok_or(BrachError::Degenerate)?;
    let end_err = (first.0 - problem.a.0)
        .hypot(first.1 - problem.a.1)
        .max((last.0 - problem.b.0).hypot(last.1 - problem.b.1));
    if end_err > tol {
        return Err(BrachError::BadEndpoints(end_err));
    }
    let y_a = problem.a.1;
    for (index, &(_, y)) in curve.iter().enumerate() {
        if y > y_a + tol {
            return Err(BrachError::CurveAboveStart { index, y });
        }
    }
    let sqrt_2g = (2.0 * problem.g).sqrt();
    let mut time = 0.0;
    for seg in curve.windows(2) {
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        let d = (x1 - x0).hypot(y1 - y0);
        if d == 0.0 {
            continue;
        }
        let h0 = (y_a - y0).max(0.0);
        let h1 = (y_a - y1).max(0.0);
        let denom = h0.sqrt() + h1.sqrt();
        if denom == 0.0 {
            return Err(BrachError::ZeroSpeedSegment);
        }
        time += 2.0 * d / (sqrt_2g * denom);
    }
    Ok(time)
}

/// Travel time density `F = 1 / sqrt(2 g (y_A - y))` as a motion objective
/// over the dofs (dx, dy) of the descending point.
struct TimeObjective {
    g: f64,
}

impl Objective for TimeObjective {
    fn eval(&self, d: &DVector<f64>) -> Result<ObjectiveEval, FunctionalError> {
        let h = -d[1];
        if h <= 0.0 {
            return Err(FunctionalError::Domain(format!(
                "speed is imaginary: curve at or above the start height (h = {h:.3e})"
            )));
        }
        let w = 2.0 * self.g * h;
        let value = w.sqrt().recip();
        let mut gradient = DVector::zeros(2);
        gradient[1] = self.g * w.powf(-1.5);
        let mut hessian = DMatrix::zeros(2, 2);
        hessian[(1, 1)] = 3.0 * self.g * self.g * w.powf(-2.5);
        Ok(ObjectiveEval {
            value,
            gradient,
            hessian,
        })
    }
}

/// Finite element solution of the Brachistochrone.
#[derive(Debug, Clone)]
pub struct FeSolution {
    /// Sampled curve as (s, x, y) rows, dense enough for time evaluation.
    pub curve: Vec<(f64, f64, f64)>,
    /// Path node (control point) positions.
    pub nodes: Vec<(f64, f64)>,
    /// Travel time of the sampled curve.
    pub time: f64,
    /// Discrete functional value (quadrature travel time).
    pub j: f64,
    pub history: Vec<IterationRecord>,
    /// Largest equal-length constraint violation, relative to the total
    /// curve length.
    pub length_residual: f64,
}

/// Solve the weak form of the Brachistochrone on the given path mesh with
/// equal-length regularization; the initial guess is the chord with a small
/// downward sag.
pub fn solve_fe(problem: &BrachProblem, path: &PathMesh) -> Result<FeSolution, BrachError> {
    solve_exact(problem)?; // validates the problem geometry
    let mut space = PathSpace::build(path).map_err(|e| SolveError::Model(e.into()))?;
    // The time density has an integrable 1/sqrt singularity at the start;
    // refine the first element's rule so the discrete functional sees it.
    space.refine_element_quadrature(0, 4);
    let n_nodes = space.n_nodes();
    let span = problem.span();

    let mut prescribed = vec![None; 2 * n_nodes];
    prescribed[0] = Some(0.0);
    prescribed[1] = Some(0.0);
    prescribed[2 * (n_nodes - 1)] = Some(problem.b.0 - problem.a.0);
    prescribed[2 * (n_nodes - 1) + 1] = Some(problem.b.1 - problem.a.1);
    let system = MotionSystem::new(
        2,
        DVector::from_element(2, 1.0),
        space,
        1e-10 * span,
        prescribed,
        true,
    );

    // Chord predictor with a 5 percent downward sag to stay clear of the
    // zero-speed start.
    let sag = 0.05 * span;
    let mut d0 = DVector::zeros(system.n_total());
    for k in 0..n_nodes {
        let s = system.space.greville(k);
        d0[2 * k] = s * (problem.b.0 - problem.a.0);
        d0[2 * k + 1] = s * (problem.b.1 - problem.a.1) - sag * (std::f64::consts::PI * s).sin();
    }

    let objective = TimeObjective { g: problem.g };
    let config = SolverConfig {
        max_iterations: 120,
        ..SolverConfig::default()
    };
    let out = solve_motion(&system, &objective, &config, &d0)?;

    let nodes: Vec<(f64, f64)> = (0..n_nodes)
        .map(|k| {
            (
                problem.a.0 + out.d_bar[2 * k],
                problem.a.1 + out.d_bar[2 * k + 1],
            )
        })
        .collect();
    let curve = sample_curve(problem, &system, &out.d_bar, path);
    let positions: Vec<(f64, f64)> = curve.iter().map(|&(_, x, y)| (x, y)).collect();
    let time = travel_time(&positions, problem)?;
    let (g, _) = crate::functional::equal_length_constraints(&system, &out.d_bar);
    let total = crate::functional::total_path_length(&system, &out.d_bar);
    Ok(FeSolution {
        curve,
        nodes,
        time,
        j: out.j,
        history: out.history,
        length_residual: g.amax() / total.max(1e-300),
    })
}

/// Sample the discrete curve: path nodes for linear Lagrange meshes (the
/// curve is that polyline already), dense per-element sampling otherwise.
fn sample_curve(
    problem: &BrachProblem,
    system: &MotionSystem,
    d_bar: &DVector<f64>,
    path: &PathMesh,
) -> Vec<(f64, f64, f64)> {
    let space = &system.space;
    let per_element = if path.degree == 1 && path.kind == crate::pathspace::PathKind::Lagrange {
        1
    } else {
        64
    };
    let n_ele = space.n_elements();
    let mut rows = Vec::with_capacity(n_ele * per_element + 1);
    for e in 0..n_ele {
        let (s0, s1) = (space.breakpoints()[e], space.breakpoints()[e + 1]);
        for i in 0..per_element {
            let s = s0 + (s1 - s0) * i as f64 / per_element as f64;
            let d = system.configuration(d_bar, s);
            rows.push((s, problem.a.0 + d[0], problem.a.1 + d[1]));
        }
    }
    let d = system.configuration(d_bar, 1.0);
    rows.push((1.0, problem.a.0 + d[0], problem.a.1 + d[1]));
    rows
}

/// CSV rendering of a sampled curve; the first column is the roll angle for
/// exact curves and the path parameter for FE curves.
pub fn curve_csv(param_name: &str, rows: &[(f64, f64, f64)]) -> String {
    let mut out = format!("{param_name},x,y\n");
    for &(t, x, y) in rows {
        out.push_str(&format!("{t:.12e},{x:.12e},{y:.12e}\n"));
    }
    out
}

/// The worked example from the appendix of the method's derivation:
/// A = (1, 5), B = (10, 2), g = 10.
pub fn reference_problem() -> BrachProblem {
    BrachProblem {
        a: (1.0, 5.0),
        b: (10.0, 2.0),
        g: 10.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::PathKind;

    #[test]
    fn reference_constants_to_three_digits() {
        let sol = solve_exact(&reference_problem()).unwrap();
        assert!((sol.c1 - 0.116).abs() < 5e-4, "C1 = {}", sol.c1);
        assert!((sol.c2 - 1.0).abs() < 1e-9, "C2 = {}", sol.c2);
        assert!((sol.t_end - 4.05).abs() < 5e-3, "t_E = {}", sol.t_end);
        // Boundary residuals by direct substitution.
        let (x, y) = sol.point(sol.t_end);
        assert!((x - 10.0).abs() < 1e-10);
        assert!((y - 2.0).abs() < 1e-10);
        assert!((sol.point(0.0).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_rising_problems_error() {
        let mut p = reference_problem();
        p.b = p.a;
        assert!(matches!(solve_exact(&p), Err(BrachError::Degenerate)));
        p.b = (4.0, 9.0);
        assert!(matches!(solve_exact(&p), Err(BrachError::EndAboveStart)));
    }

    #[test]
    fn mirrored_problem_solves() {
        let p = BrachProblem {
            a: (10.0, 5.0),
            b: (1.0, 2.0),
            g: 10.0,
        };
        let sol = solve_exact(&p).unwrap();
        let (x, y) = sol.point(sol.t_end);
        assert!((x - 1.0).abs() < 1e-10 && (y - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sampled_cycloid_time_matches_the_closed_form() {
        let sol = solve_exact(&reference_problem()).unwrap();
        let samples: Vec<(f64, f64)> = sol.sample(4000).iter().map(|&(_, x, y)| (x, y)).collect();
        let t = travel_time(&samples, &reference_problem()).unwrap();
        let exact = sol.travel_time();
        assert!(
            (t - exact).abs() < 1e-5 * exact,
            "sampled {t} vs closed form {exact}"
        );
        // The polyline is itself admissible, so its time cannot undercut the
        // optimum.
        assert!(t >= exact - 1e-9);
    }

    #[test]
    fn straight_chord_is_slower_than_the_cycloid() {
        let p = reference_problem();
        let sol = solve_exact(&p).unwrap();
        let chord = vec![p.a, p.b];
        let t_chord = travel_time(&chord, &p).unwrap();
        assert!(t_chord > sol.travel_time());
    }

    #[test]
    fn vertical_free_fall_has_the_textbook_time() {
        let p = BrachProblem {
            a: (2.0, 5.0),
            b: (2.0, 1.0),
            g: 9.81,
        };
        let t = travel_time(&[p.a, p.b], &p).unwrap();
        let exact = (2.0 * 4.0 / 9.81_f64).sqrt();
        assert!((t - exact).abs() < 1e-12);
    }

    #[test]
    fn curve_above_start_is_rejected() {
        let p = reference_problem();
        let curve = vec![p.a, (4.0, 6.0), p.b];
        assert!(matches!(
            travel_time(&curve, &p),
            Err(BrachError::CurveAboveStart { .. })
        ));
    }

    #[test]
    fn fe_solution_converges_and_balances_element_lengths() {
        let path = PathMesh {
            kind: PathKind::Lagrange,
            degree: 1,
            n_elements: 15,
            continuity_reductions: vec![],
        };
        let sol = solve_fe(&reference_problem(), &path).unwrap();
        assert!(sol.length_residual < 1e-8, "lengths {}", sol.length_residual);
        let exact = solve_exact(&reference_problem()).unwrap().travel_time();
        assert!(sol.time >= exact - 1e-9);
        assert!(sol.time < 1.01 * exact, "T = {} vs {}", sol.time, exact);
        // Endpoints interpolate A and B exactly.
        let first = sol.curve.first().unwrap();
        let last = sol.curve.last().unwrap();
        assert_eq!((first.1, first.2), reference_problem().a);
        assert_eq!((last.1, last.2), reference_problem().b);
    }
}
