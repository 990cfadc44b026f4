//! Built-in verification suite.
//!
//! Runs the quantitative checks that gate a release: the Brachistochrone
//! constants, finite-difference consistency of element and functional
//! derivatives, rigid-body invariance, the kinematic-mechanism benchmark and
//! output determinism. Each check reports one pass/fail row.

use nalgebra::{DMatrix, DVector};

use crate::brachistochrone as brach;
use crate::elements::{
    eas_quad_state_with_params, quad_state, truss_state, ElementError, ElementState,
};
use crate::functional::{energy_csv, energy_rows, equal_length_constraints, MotionContext};
use crate::model::{Material, Mesh};
use crate::pathspace::{arc_length_state, PathKind, PathMesh, PathSpace};
use crate::solver::{iterations_csv, solve_problem};
use crate::{benchmarks, quadrature};

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

/// Deterministic pseudo-random stream (xorshift64*), independent of any
/// external crate so verification runs identically everywhere.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(seed.max(1))
    }

    /// Uniform in (-0.5, 0.5).
    pub fn draw(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Central finite differences of a scalar function.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, d: &[f64], step: f64) -> DVector<f64> {
    let mut g = DVector::zeros(d.len());
    let mut dp = d.to_vec();
    for i in 0..d.len() {
        dp[i] = d[i] + step;
        let fp = f(&dp);
        dp[i] = d[i] - step;
        let fm = f(&dp);
        dp[i] = d[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Central finite differences of a vector function (column-wise Jacobian).
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> DVector<f64>, d: &[f64], step: f64) -> DMatrix<f64> {
    let n = f(d).len();
    let mut j = DMatrix::zeros(n, d.len());
    let mut dp = d.to_vec();
    for i in 0..d.len() {
        dp[i] = d[i] + step;
        let fp = f(&dp);
        dp[i] = d[i] - step;
        let fm = f(&dp);
        dp[i] = d[i];
        j.set_column(i, &((fp - fm) / (2.0 * step)));
    }
    j
}

/// Relative finite-difference errors of one element evaluator.
#[derive(Debug, Clone, Copy)]
pub struct ElementFdErrors {
    pub force: f64,
    pub stiffness: f64,
}

/// Check internal force and tangent stiffness of an element evaluator
/// against central differences of its energy and force. The evaluator may be
/// any closure, which lets negative-control tests feed a corrupted element.
pub fn check_element_consistency(
    eval: &dyn Fn(&[f64]) -> Result<ElementState, ElementError>,
    d: &[f64],
    step: f64,
) -> Result<ElementFdErrors, ElementError> {
    let state = eval(d)?;
    let energy = |x: &[f64]| eval(x).expect("perturbed state").energy;
    let fd_f = fd_gradient(&energy, d, step);
    let force = (&state.f_int - &fd_f).norm() / state.f_int.norm().max(1.0);
    let f_int = |x: &[f64]| eval(x).expect("perturbed state").f_int;
    let fd_k = fd_jacobian(&f_int, d, step);
    let stiffness = (&state.k_t - &fd_k).norm() / state.k_t.norm().max(1e-30);
    Ok(ElementFdErrors { force, stiffness })
}

/// Largest relative member length change over all snapshots of a motion:
/// bar lengths for trusses, edge lengths for quads. Zero for an exact
/// mechanism motion.
pub fn max_member_length_change(
    mesh: &Mesh,
    dof_map: &crate::model::DofMap,
    snapshots: &[DVector<f64>],
) -> f64 {
    let dim = dof_map.dim();
    let mut worst = 0.0_f64;
    for snap in snapshots {
        let mut full = vec![0.0; mesh.nodes.len() * dim];
        for (i, &(node, dir)) in dof_map.dofs().iter().enumerate() {
            full[node * dim + dir.index()] = snap[i];
        }
        let pos = |n: usize, c: usize| mesh.nodes[n].x[c] + full[n * dim + c];
        let mut edge = |a: usize, b: usize| {
            let l0: f64 = (0..dim)
                .map(|c| (mesh.nodes[a].x[c] - mesh.nodes[b].x[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            let l: f64 = (0..dim)
                .map(|c| (pos(a, c) - pos(b, c)).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max((l - l0).abs() / l0);
        };
        for ele in &mesh.elements {
            match ele.kind {
                crate::model::ElementKind::Truss2d | crate::model::ElementKind::Truss3d => {
                    edge(ele.nodes[0], ele.nodes[1]);
                }
                crate::model::ElementKind::Quad4 | crate::model::ElementKind::Quad4Eas => {
                    for k in 0..4 {
                        edge(ele.nodes[k], ele.nodes[(k + 1) % 4]);
                    }
                }
            }
        }
    }
    worst
}

/// Run the full verification suite; the report order is fixed.
pub fn run_all() -> Vec<CheckReport> {
    vec![
        brachistochrone_constants(),
        brachistochrone_fe(),
        partition_of_unity(),
        quadrature_exactness(),
        arc_length_identities(),
        element_consistency(),
        rigid_body_invariance(),
        eas_constant_strain_patch(),
        functional_consistency(),
        kinematic_mechanism(),
        equal_length_regularization(),
        determinism(),
    ]
}

fn brachistochrone_constants() -> CheckReport {
    let name = "brachistochrone exact constants";
    match brach::solve_exact(&brach::reference_problem()) {
        Ok(sol) => {
            let (x, y) = sol.point(sol.t_end);
            let residual = (x - 10.0).hypot(y - 2.0);
            let ok = (sol.c1 - 0.116).abs() < 5e-4
                && (sol.c2 - 1.0).abs() < 1e-9
                && (sol.t_end - 4.05).abs() < 5e-3
                && residual < 1e-10;
            CheckReport::new(
                name,
                ok,
                format!(
                    "C1 = {:.4} (0.116), C2 = {:.3} (1.0), t_E = {:.3} (4.05), boundary residual {:.1e}",
                    sol.c1, sol.c2, sol.t_end, residual
                ),
            )
        }
        Err(e) => CheckReport::new(name, false, e.to_string()),
    }
}

fn brachistochrone_fe() -> CheckReport {
    let name = "brachistochrone finite elements";
    let problem = brach::reference_problem();
    let exact = match brach::solve_exact(&problem) {
        Ok(s) => s.travel_time(),
        Err(e) => return CheckReport::new(name, false, e.to_string()),
    };
    let path = PathMesh {
        kind: PathKind::Lagrange,
        degree: 1,
        n_elements: 15,
        continuity_reductions: vec![],
    };
    match brach::solve_fe(&problem, &path) {
        Ok(fe) => {
            let ok = fe.length_residual < 1e-8
                && fe.time >= exact - 1e-9
                && fe.time < 1.01 * exact;
            CheckReport::new(
                name,
                ok,
                format!(
                    "T = {:.6} (exact {:.6}, +{:.3}%), equal-length residual {:.1e}",
                    fe.time,
                    exact,
                    100.0 * (fe.time / exact - 1.0),
                    fe.length_residual
                ),
            )
        }
        Err(e) => CheckReport::new(name, false, e.to_string()),
    }
}

fn partition_of_unity() -> CheckReport {
    let name = "path shape functions: partition of unity";
    let mut worst_n = 0.0_f64;
    let mut worst_d = 0.0_f64;
    let mut stream = Stream::new(11);
    for kind in [PathKind::Lagrange, PathKind::BSpline] {
        for degree in 1..=4 {
            let space = PathSpace::build(&PathMesh {
                kind,
                degree,
                n_elements: 6,
                continuity_reductions: vec![3],
            })
            .expect("valid path");
            for _ in 0..25 {
                let s = stream.draw() + 0.5;
                let sh = space.eval(s).expect("parameter in range");
                worst_n = worst_n.max((sh.n.iter().sum::<f64>() - 1.0).abs());
                worst_d = worst_d.max(sh.dn.iter().sum::<f64>().abs());
            }
        }
    }
    CheckReport::new(
        name,
        worst_n < 1e-13 && worst_d < 1e-10,
        format!("max |sum N - 1| = {worst_n:.1e}, max |sum N'| = {worst_d:.1e}"),
    )
}

fn quadrature_exactness() -> CheckReport {
    let name = "Gauss-Legendre rules";
    let mut worst = 0.0_f64;
    for n in 1..=8 {
        let (p, w) = quadrature::gauss_legendre(n);
        for deg in 0..2 * n {
            let num: f64 = p.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            worst = worst.max((num - exact).abs());
        }
    }
    CheckReport::new(name, worst < 1e-13, format!("max moment error {worst:.1e}"))
}

fn arc_length_identities() -> CheckReport {
    let name = "arc length: homogeneity and derivatives";
    let mut stream = Stream::new(29);
    let weights = DVector::from_vec(vec![0.3, 0.3, 0.15, 0.15, 0.05, 0.05]);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let d = DVector::from_iterator(6, (0..6).map(|_| 4.0 * stream.draw()));
        if d.norm() < 0.1 {
            continue;
        }
        let a = arc_length_state(&d, &weights, 1e-15);
        let c = 1.0 + stream.draw().abs() * 5.0;
        let scaled = arc_length_state(&(&d * c), &weights, 1e-15);
        worst = worst.max((scaled.s_u - c * a.s_u).abs() / scaled.s_u);
        worst = worst.max((a.grad.dot(&d) - a.s_u).abs() / a.s_u);
        worst = worst.max(a.hess_apply(&d).norm() / a.s_u.max(1.0));
        let fd = fd_gradient(
            &|x| arc_length_state(&DVector::from_row_slice(x), &weights, 1e-15).s_u,
            d.as_slice(),
            1e-7,
        );
        worst = worst.max((&a.grad - &fd).norm() / a.grad.norm());
    }
    CheckReport::new(name, worst < 1e-6, format!("max identity error {worst:.1e}"))
}

fn element_consistency() -> CheckReport {
    let name = "element derivatives vs finite differences";
    let truss_mat = Material::truss(30000.0, 0.1);
    let quad_mat = Material::plane_stress(30000.0, 0.3, 0.1);
    let mut stream = Stream::new(7);
    let mut worst_f = 0.0_f64;
    let mut worst_k = 0.0_f64;
    for trial in 0..5 {
        let mut rand = |n: usize| -> Vec<f64> {
            (0..n).map(|_| 0.3 * stream.draw()).collect()
        };
        let _ = trial;
        let x0 = [0.0, 0.0];
        let x1 = [1.3, 0.2];
        let d = rand(4);
        let r = check_element_consistency(
            &|d| truss_state(&[&x0, &x1], d, &truss_mat),
            &d,
            1e-6 * 1.3,
        )
        .expect("valid bar");
        worst_f = worst_f.max(r.force);
        worst_k = worst_k.max(r.stiffness);

        let y0 = [0.0, 0.0, 0.0];
        let y1 = [0.8, 0.9, 1.1];
        let d = rand(6);
        let r = check_element_consistency(
            &|d| truss_state(&[&y0, &y1], d, &truss_mat),
            &d,
            1e-6 * 1.6,
        )
        .expect("valid bar");
        worst_f = worst_f.max(r.force);
        worst_k = worst_k.max(r.stiffness);

        let q = [[0.0, 0.0], [1.1, 0.1], [1.2, 1.0], [-0.1, 0.9]];
        let qr: Vec<&[f64]> = q.iter().map(|c| c.as_slice()).collect();
        let d = rand(8);
        let r = check_element_consistency(&|d| quad_state(&qr, d, &quad_mat), &d, 1e-6 * 1.5)
            .expect("valid quad");
        worst_f = worst_f.max(r.force);
        worst_k = worst_k.max(r.stiffness);
        let r = check_element_consistency(
            &|d| eas_quad_state_with_params(&qr, d, &quad_mat).map(|(s, _)| s),
            &d,
            1e-6 * 1.5,
        )
        .expect("valid EAS quad");
        worst_f = worst_f.max(r.force);
        worst_k = worst_k.max(r.stiffness);
    }
    CheckReport::new(
        name,
        worst_f < 1e-6 && worst_k < 1e-5,
        format!("max force error {worst_f:.1e}, max stiffness error {worst_k:.1e}"),
    )
}

fn rigid_body_invariance() -> CheckReport {
    let name = "rigid body motions carry no energy";
    let mut stream = Stream::new(101);
    let truss_mat = Material::truss(30000.0, 0.1);
    let quad_mat = Material::plane_stress(30000.0, 0.3, 0.1);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let phi = 2.0 * std::f64::consts::PI * stream.draw();
        let (s, c) = phi.sin_cos();
        let tx = 2.0 * stream.draw();
        let ty = 2.0 * stream.draw();
        let map = |x: f64, y: f64| (c * x - s * y + tx - x, s * x + c * y + ty - y);

        let x0 = [0.0, 0.0];
        let x1 = [1.0, 0.4];
        let (u0x, u0y) = map(x0[0], x0[1]);
        let (u1x, u1y) = map(x1[0], x1[1]);
        let st = truss_state(&[&x0, &x1], &[u0x, u0y, u1x, u1y], &truss_mat).expect("valid bar");
        let e_v = 30000.0 * 0.1 * (1.0_f64 + 0.16).sqrt();
        worst = worst.max(st.energy.abs() / (1e-12 * e_v));

        let q = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let qr: Vec<&[f64]> = q.iter().map(|c| c.as_slice()).collect();
        let mut d = [0.0; 8];
        for (k, xk) in q.iter().enumerate() {
            let (ux, uy) = map(xk[0], xk[1]);
            d[2 * k] = ux;
            d[2 * k + 1] = uy;
        }
        let st = quad_state(&qr, &d, &quad_mat).expect("valid quad");
        worst = worst.max(st.energy.abs() / (1e-12 * 30000.0 * 0.1));
    }
    CheckReport::new(name, worst < 1.0, format!("max energy / (1e-12 E V) = {worst:.2}"))
}

fn eas_constant_strain_patch() -> CheckReport {
    let name = "EAS constant-strain patch";
    let q = [[0.0, 0.0], [1.1, 0.2], [1.3, 1.2], [0.1, 0.9]];
    let qr: Vec<&[f64]> = q.iter().map(|c| c.as_slice()).collect();
    let quad_mat = Material::plane_stress(30000.0, 0.3, 0.1);
    let mut d = [0.0; 8];
    for (k, xk) in q.iter().enumerate() {
        d[2 * k] = 0.008 * xk[0] + 0.002 * xk[1];
        d[2 * k + 1] = -0.003 * xk[1];
    }
    match (
        eas_quad_state_with_params(&qr, &d, &quad_mat),
        quad_state(&qr, &d, &quad_mat),
    ) {
        (Ok((eas, params)), Ok(q1)) => {
            let alpha_max = params.alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            let de = (eas.energy - q1.energy).abs() / q1.energy.max(1e-30);
            CheckReport::new(
                name,
                alpha_max < 1e-10 && de < 1e-10,
                format!("max |alpha| = {alpha_max:.1e}, energy deviation {de:.1e}"),
            )
        }
        _ => CheckReport::new(name, false, "element evaluation failed".into()),
    }
}

fn functional_consistency() -> CheckReport {
    let name = "functional derivatives vs finite differences";
    let problem = benchmarks::two_bar_truss();
    let ctx = match MotionContext::new(&problem) {
        Ok(c) => c,
        Err(e) => return CheckReport::new(name, false, e.to_string()),
    };
    let mut stream = Stream::new(1234);
    let mut worst_r = 0.0_f64;
    let mut worst_k = 0.0_f64;
    let mut worst_sym = 0.0_f64;
    for _ in 0..3 {
        let mut d = DVector::from_iterator(
            ctx.system.n_total(),
            (0..ctx.system.n_total()).map(|_| 0.3 * stream.draw()),
        );
        ctx.system.apply_prescribed(&mut d);
        let asm = match ctx.assemble(&d) {
            Ok(a) => a,
            Err(e) => return CheckReport::new(name, false, e.to_string()),
        };
        let h = 1e-6 * problem.mesh.characteristic_length();
        for (k, &fi) in ctx.system.free.iter().enumerate() {
            let mut dp = d.clone();
            dp[fi] += h;
            let jp = ctx.evaluate_j(&dp).expect("admissible").0;
            let rp = ctx.assemble(&dp).expect("admissible").r_mod;
            dp[fi] -= 2.0 * h;
            let jm = ctx.evaluate_j(&dp).expect("admissible").0;
            let rm = ctx.assemble(&dp).expect("admissible").r_mod;
            let fd_j = (jp - jm) / (2.0 * h);
            worst_r = worst_r.max((fd_j - asm.r_mod[k]).abs() / asm.r_mod.norm().max(1.0));
            let fd_col = (rp - rm) / (2.0 * h);
            for i in 0..fd_col.len() {
                worst_k = worst_k.max((fd_col[i] - asm.k_mod[(i, k)]).abs() / asm.k_mod.amax());
            }
        }
        worst_sym = worst_sym
            .max((&asm.k_mod - asm.k_mod.transpose()).amax() / asm.k_mod.amax().max(1e-30));
    }
    CheckReport::new(
        name,
        worst_r < 1e-6 && worst_k < 1e-4 && worst_sym < 1e-10,
        format!(
            "R_mod error {worst_r:.1e}, K_mod error {worst_k:.1e}, asymmetry {worst_sym:.1e}"
        ),
    )
}

fn kinematic_mechanism() -> CheckReport {
    let name = "kinematic mechanism stays strain-free";
    let problem = benchmarks::kinematic_truss();
    match solve_problem(&problem) {
        Ok(sol) => {
            let ctx = MotionContext::new(&problem).expect("valid benchmark");
            let snaps = ctx.snapshots(&sol.d_bar);
            let stretch = max_member_length_change(&problem.mesh, &ctx.dof_map, &snaps);
            let ratio = sol.j / sol.j_predictor.max(1e-300);
            CheckReport::new(
                name,
                stretch < 1e-4 && ratio < 1e-3,
                format!(
                    "max bar stretch {stretch:.1e}, J = {:.3e}, J/J_predictor = {ratio:.1e}",
                    sol.j
                ),
            )
        }
        Err(e) => CheckReport::new(name, false, e.to_string()),
    }
}

fn equal_length_regularization() -> CheckReport {
    let name = "equal-length constraints at convergence";
    let problem = benchmarks::two_bar_truss();
    match solve_problem(&problem) {
        Ok(sol) => {
            let ctx = MotionContext::new(&problem).expect("valid benchmark");
            let (g, _) = equal_length_constraints(&ctx.system, &sol.d_bar);
            let total = crate::functional::total_path_length(&ctx.system, &sol.d_bar);
            let rel = g.amax() / total;
            CheckReport::new(
                name,
                rel < 1e-8,
                format!("max |L_e - L_e+1| / L = {rel:.1e} over {} elements", ctx.system.space.n_elements()),
            )
        }
        Err(e) => CheckReport::new(name, false, e.to_string()),
    }
}

fn determinism() -> CheckReport {
    let name = "bit-identical reruns";
    let problem = benchmarks::two_bar_truss();
    let run = || -> Result<(String, String), String> {
        let sol = solve_problem(&problem).map_err(|e| e.to_string())?;
        let ctx = MotionContext::new(&problem).map_err(|e| e.to_string())?;
        let rows = energy_rows(&ctx.system, &ctx.objective(), &sol.d_bar).map_err(|e| e.to_string())?;
        Ok((energy_csv(&rows), iterations_csv(&sol.history)))
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => CheckReport::new(
            name,
            a == b,
            if a == b {
                "energy and iteration CSVs identical across reruns".into()
            } else {
                "reruns differ".into()
            },
        ),
        (Err(e), _) | (_, Err(e)) => CheckReport::new(name, false, e),
    }
}

/// Render the reports as an aligned table; returns (text, all_passed).
pub fn format_table(reports: &[CheckReport]) -> (String, bool) {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    let mut all = true;
    for r in reports {
        all &= r.passed;
        out.push_str(&format!(
            "{:<width$}  {}  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail,
        ));
    }
    (out, all)
}
