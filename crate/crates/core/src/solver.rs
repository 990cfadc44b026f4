//! Monolithic constrained Newton solve of the motion design system.
//!
//! The solve runs on all configurations at once: with the controlled-dof
//! regularization the system is the reduced Hessian system of the functional,
//! with equal path element lengths it becomes a symmetric KKT saddle system
//! with one Lagrange multiplier per interior element boundary. A relaxation
//! factor damps iterations whose full step would increase the residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{
    add_equal_length_hessian, assemble, equal_length_constraints, evaluate_j, FunctionalError,
    MotionContext, MotionSystem, Objective, PathSample,
};
use crate::model::{ModelError, MotionProblem, PredictorSpec, Regularization};
use crate::pathspace::{MotionState, PathSpace};

const MIN_RELAXATION_EXP: i32 = -10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence tolerance on the L2 norm of the residual.
    #[serde(alias = "tol")]
    pub tolerance: f64,
    #[serde(alias = "max_iter")]
    pub max_iterations: usize,
    /// Damp Newton steps that would increase the residual norm.
    pub relaxation: bool,
    /// Smallest admissible relaxation factor.
    pub min_relaxation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            relaxation: true,
            min_relaxation: 2f64.powi(MIN_RELAXATION_EXP),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.tolerance <= 0.0 || self.tolerance.is_nan() {
            return Err("solver tolerance must be positive".into());
        }
        if self.max_iterations == 0 {
            return Err("solver needs at least one iteration".into());
        }
        if !(self.min_relaxation > 0.0 && self.min_relaxation <= 1.0) {
            return Err("relaxation floor must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// One accepted Newton state.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub relaxation: f64,
    pub j: f64,
    /// The minimum relaxation factor was forced (no decrease found).
    pub forced: bool,
}

/// Iteration log as machine-parsable CSV.
pub fn iterations_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,residual_norm,relaxation,J\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.12e},{:.6e},{:.12e}\n",
            r.iteration, r.residual_norm, r.relaxation, r.j
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("assembly failed: {0}")]
    Functional(#[from] FunctionalError),
    #[error("Newton diverged after {iterations} iterations: {detail}")]
    Diverged {
        iterations: usize,
        detail: String,
        history: Vec<IterationRecord>,
    },
    #[error("singular system matrix: pivot vanishes at {location}")]
    Singular {
        location: String,
        history: Vec<IterationRecord>,
    },
    #[error("predictor failed: {0}")]
    Predictor(String),
}

impl SolveError {
    /// Iteration history gathered before the failure, when any.
    pub fn history(&self) -> &[IterationRecord] {
        match self {
            SolveError::Diverged { history, .. } | SolveError::Singular { history, .. } => history,
            _ => &[],
        }
    }
}

/// Outcome of the monolithic Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub d_bar: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub j: f64,
    pub samples: Vec<PathSample>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

type AcceptedStep = (MotionState, EvalState, f64, bool);

struct EvalState {
    j: f64,
    k_mod: DMatrix<f64>,
    samples: Vec<PathSample>,
    jac: DMatrix<f64>,
    residual: DVector<f64>,
    norm: f64,
}

fn eval_state(
    system: &MotionSystem,
    objective: &dyn Objective,
    state: &MotionState,
) -> Result<EvalState, FunctionalError> {
    let asm = assemble(system, objective, &state.d_bar)?;
    let m = system.n_constraints();
    let (g, jac) = if m > 0 {
        equal_length_constraints(system, &state.d_bar)
    } else {
        (DVector::zeros(0), DMatrix::zeros(0, system.n_free()))
    };
    let nf = system.n_free();
    let mut residual = DVector::zeros(nf + m);
    let grad_l = &asm.r_mod + jac.transpose() * &state.multipliers;
    residual.rows_mut(0, nf).copy_from(&grad_l);
    residual.rows_mut(nf, m).copy_from(&g);
    let norm = residual.norm();
    Ok(EvalState {
        j: asm.j,
        k_mod: asm.k_mod,
        samples: asm.samples,
        jac,
        residual,
        norm,
    })
}

/// Newton iteration on the stationarity system, starting from the predictor
/// motion `d0`. Prescribed entries of `d0` are overwritten with their exact
/// values before the first iteration.
pub fn solve_motion(
    system: &MotionSystem,
    objective: &dyn Objective,
    config: &SolverConfig,
    d0: &DVector<f64>,
) -> Result<NewtonOutcome, SolveError> {
    let nf = system.n_free();
    let m = system.n_constraints();
    let mut iterate = MotionState {
        d_bar: d0.clone(),
        multipliers: DVector::zeros(m),
    };
    system.apply_prescribed(&mut iterate.d_bar);

    let mut state = eval_state(system, objective, &iterate)?;
    let r0 = state.norm.max(config.tolerance);
    let mut history = vec![IterationRecord {
        iteration: 0,
        residual_norm: state.norm,
        relaxation: 1.0,
        j: state.j,
        forced: false,
    }];

    for iteration in 1..=config.max_iterations {
        if state.norm < config.tolerance {
            return Ok(NewtonOutcome {
                d_bar: iterate.d_bar,
                multipliers: iterate.multipliers,
                j: state.j,
                samples: state.samples,
                history,
                converged: true,
            });
        }

        // KKT tangent: Hessian of the Lagrangian plus the constraint rows.
        let mut kkt = DMatrix::zeros(nf + m, nf + m);
        let mut k_top = state.k_mod.clone();
        if m > 0 {
            add_equal_length_hessian(system, &iterate.d_bar, &iterate.multipliers, &mut k_top);
        }
        kkt.view_mut((0, 0), (nf, nf)).copy_from(&k_top);
        for c in 0..m {
            for i in 0..nf {
                kkt[(nf + c, i)] = state.jac[(c, i)];
                kkt[(i, nf + c)] = state.jac[(c, i)];
            }
        }

        let lu = kkt.lu();
        let delta = match lu.solve(&(-&state.residual)) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x,
            _ => {
                let location = singular_location(&lu, system, nf);
                return Err(SolveError::Singular { location, history });
            }
        };

        // Relaxation: halve until the residual decreases, else force the
        // smallest factor.
        let mut omega = 1.0;
        let mut accepted: Option<AcceptedStep> = None;
        loop {
            let mut candidate = MotionState {
                d_bar: iterate.d_bar.clone(),
                multipliers: &iterate.multipliers + delta.rows(nf, m) * omega,
            };
            for (k, &fi) in system.free.iter().enumerate() {
                candidate.d_bar[fi] += omega * delta[k];
            }
            let at_floor = omega <= config.min_relaxation + f64::EPSILON;
            match eval_state(system, objective, &candidate) {
                Ok(trial) if trial.norm < state.norm || at_floor || !config.relaxation => {
                    let forced = trial.norm >= state.norm;
                    accepted = Some((candidate, trial, omega, forced));
                }
                Ok(_) => {}
                Err(err) => {
                    if at_floor || !config.relaxation {
                        return Err(SolveError::Diverged {
                            iterations: iteration,
                            detail: format!("step left the admissible domain: {err}"),
                            history,
                        });
                    }
                }
            }
            if accepted.is_some() {
                break;
            }
            omega *= 0.5;
        }
        let (candidate, trial, omega, forced) = accepted.expect("loop exits on accept");
        iterate = candidate;
        state = trial;
        history.push(IterationRecord {
            iteration,
            residual_norm: state.norm,
            relaxation: omega,
            j: state.j,
            forced,
        });

        if !state.norm.is_finite() || state.norm > 1e6 * r0 {
            return Err(SolveError::Diverged {
                iterations: iteration,
                detail: format!("residual norm grew to {:.3e} (initial {:.3e})", state.norm, r0),
                history,
            });
        }
    }

    if state.norm < config.tolerance {
        return Ok(NewtonOutcome {
            d_bar: iterate.d_bar,
            multipliers: iterate.multipliers,
            j: state.j,
            samples: state.samples,
            history,
            converged: true,
        });
    }
    Err(SolveError::Diverged {
        iterations: config.max_iterations,
        detail: format!(
            "residual {:.3e} above tolerance {:.3e} after the iteration budget",
            state.norm, config.tolerance
        ),
        history,
    })
}

fn singular_location(
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    system: &MotionSystem,
    nf: usize,
) -> String {
    let u = lu.u();
    let mut worst = (0usize, f64::INFINITY);
    let scale = (0..u.nrows()).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..u.nrows() {
        let p = u[(i, i)].abs();
        if p < worst.1 {
            worst = (i, p);
        }
    }
    let (col, pivot) = worst;
    let detail = if col < nf {
        let full = system.free[col];
        let node = full / system.n_dof;
        let dof = full % system.n_dof;
        format!("path node {node}, spatial dof {dof}")
    } else {
        format!("equal-length constraint {}", col - nf)
    };
    format!("{detail} (|pivot| = {:.3e}, scale {:.3e})", pivot, scale)
}

/// Linear interpolation predictor: every prescribed dof moves linearly in the
/// path parameter between its prescribed stage values; dofs without any
/// prescription stay at zero.
pub fn predictor_linear(ctx: &MotionContext<'_>) -> DVector<f64> {
    let system = &ctx.system;
    let space = &system.space;
    let n = system.n_dof;
    let mut knots: Vec<Vec<(f64, f64)>> = vec![vec![(0.0, 0.0)]; n];
    let mut stages: Vec<(f64, usize)> = ctx
        .problem
        .configurations
        .iter()
        .map(|c| {
            let cp = space.interpolatory_node(c.path_node).expect("validated");
            (space.greville(cp), cp)
        })
        .collect();
    stages.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for &(s, cp) in &stages {
        for (i, dof_knots) in knots.iter_mut().enumerate() {
            if let Some(v) = system.prescribed[cp * n + i] {
                dof_knots.push((s, v));
            }
        }
    }
    let mut d0 = DVector::zeros(system.n_total());
    for k in 0..space.n_nodes() {
        let s = space.greville(k);
        for i in 0..n {
            d0[k * n + i] = eval_piecewise(&knots[i], s);
        }
    }
    system.apply_prescribed(&mut d0);
    d0
}

fn eval_piecewise(knots: &[(f64, f64)], s: f64) -> f64 {
    let mut prev = knots[0];
    for &k in &knots[1..] {
        if s <= k.0 {
            if k.0 == prev.0 {
                return k.1;
            }
            let t = (s - prev.0) / (k.0 - prev.0);
            return prev.1 + t * (k.1 - prev.1);
        }
        prev = k;
    }
    prev.1
}

/// Interpolate a coarse motion onto the path nodes of a finer discretization.
pub fn embed_motion(
    coarse_space: &PathSpace,
    coarse_d: &DVector<f64>,
    fine: &MotionSystem,
) -> DVector<f64> {
    let n = fine.n_dof;
    let mut d = DVector::zeros(fine.n_total());
    for k in 0..fine.space.n_nodes() {
        let s = fine.space.greville(k);
        let value = coarse_space.interpolate(coarse_d, n, s);
        for i in 0..n {
            d[k * n + i] = value[i];
        }
    }
    fine.apply_prescribed(&mut d);
    d
}

/// Hierarchical predictor: solve on coarser path meshes (seeded linearly),
/// interpolating each solution into the next finer mesh.
pub fn predictor_hierarchical(
    ctx: &MotionContext<'_>,
    coarse_elements: &[usize],
) -> Result<DVector<f64>, SolveError> {
    let target = ctx.problem.path.n_elements;
    let mut counts = coarse_elements.to_vec();
    counts.sort_unstable();
    for &c in &counts {
        if c > target {
            return Err(SolveError::Predictor(format!(
                "coarse element count {c} exceeds the target {target}"
            )));
        }
    }
    let mut previous: Option<(MotionProblem, DVector<f64>)> = None;
    for &count in &counts {
        let coarse = ctx
            .problem
            .with_overrides(Some(count), None, None, None, None)?;
        let coarse_ctx = MotionContext::new(&coarse)?;
        let d0 = match &previous {
            None => predictor_linear(&coarse_ctx),
            Some((prev_problem, prev_d)) => {
                let prev_ctx = MotionContext::new(prev_problem)?;
                embed_motion(&prev_ctx.system.space, prev_d, &coarse_ctx.system)
            }
        };
        let out = solve_motion(
            &coarse_ctx.system,
            &coarse_ctx.objective(),
            &coarse.solver,
            &d0,
        )
        .map_err(|e| {
            SolveError::Predictor(format!("coarse solve with {count} elements failed: {e}"))
        })?;
        previous = Some((coarse, out.d_bar));
    }
    match previous {
        None => Ok(predictor_linear(ctx)),
        Some((prev_problem, prev_d)) => {
            let prev_ctx = MotionContext::new(&prev_problem)?;
            Ok(embed_motion(&prev_ctx.system.space, &prev_d, &ctx.system))
        }
    }
}

/// Preanalysis predictor: take the internal forces of the target
/// configuration as the load case and trace the equilibrium path toward it
/// with a displacement-controlled Newton continuation; the equilibrium states
/// seed the path nodes.
pub fn predictor_preanalysis(ctx: &MotionContext<'_>) -> Result<DVector<f64>, SolveError> {
    let system = &ctx.system;
    let n = system.n_dof;
    let n_nodes = system.space.n_nodes();
    let last = n_nodes - 1;
    let mut target = DVector::zeros(n);
    for i in 0..n {
        match system.prescribed[last * n + i] {
            Some(v) => target[i] = v,
            None => {
                return Err(SolveError::Predictor(
                    "preanalysis requires a fully prescribed target configuration".into(),
                ))
            }
        }
    }
    let objective = ctx.objective();
    let f_ext = objective.internal_force(&target)?;

    // Controlled dof: the regularized one, or the largest target component.
    let ctrl = match ctx.problem.regularization {
        Regularization::ControlledDof { node, dir, .. } => ctx
            .dof_map
            .index_of(node, dir)
            .expect("validated controlled dof"),
        Regularization::EqualLength => {
            let mut best = 0;
            for i in 0..n {
                if target[i].abs() > target[best].abs() {
                    best = i;
                }
            }
            best
        }
    };
    let load_scale = f_ext.norm();
    let with_load = load_scale > 1e-12 * (1.0 + target.amax());

    let mut d = DVector::zeros(n);
    let mut lambda = 0.0;
    let mut d0 = DVector::zeros(system.n_total());
    let mut reached = 0.0;
    for k in 1..n_nodes {
        let ctrl_value = system.space.greville(k) * target[ctrl];
        // Adaptive substepping: a path-node increment that jumps across a
        // limit point is bisected until the equilibrium iteration succeeds.
        let mut guard = 0;
        while reached != ctrl_value {
            let mut step = ctrl_value - reached;
            let mut ok = false;
            for _ in 0..8 {
                let mut trial = d.clone();
                trial[ctrl] = reached + step;
                let mut trial_lambda = lambda;
                if equilibrium_step(&objective, &mut trial, &mut trial_lambda, ctrl, &f_ext, with_load)
                    .is_ok()
                {
                    d = trial;
                    lambda = trial_lambda;
                    reached += step;
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if !ok {
                return Err(SolveError::Predictor(format!(
                    "continuation stalled at path node {k} (controlled value {:.4e})",
                    reached
                )));
            }
            guard += 1;
            if guard > 1000 {
                return Err(SolveError::Predictor(
                    "continuation needs too many substeps".into(),
                ));
            }
        }
        for i in 0..n {
            d0[k * n + i] = d[i];
        }
    }
    system.apply_prescribed(&mut d0);
    Ok(d0)
}

/// One displacement-controlled equilibrium solve: internal forces balance
/// `lambda * f_ext` on all non-controlled dofs, the controlled dof is fixed.
/// With a vanishing load vector the continuation is purely
/// displacement-driven and the load factor is dropped.
fn equilibrium_step(
    objective: &crate::functional::InternalEnergy<'_>,
    d: &mut DVector<f64>,
    lambda: &mut f64,
    ctrl: usize,
    f_ext: &DVector<f64>,
    with_load: bool,
) -> Result<(), String> {
    let n = d.len();
    let others: Vec<usize> = (0..n).filter(|&i| i != ctrl).collect();
    let unknowns = others.len() + usize::from(with_load);
    if unknowns == 0 {
        return Ok(());
    }
    let tol = 1e-9 * (1.0 + f_ext.norm());
    for _ in 0..60 {
        let eval = objective.eval(d).map_err(|e| e.to_string())?;
        let r_full = &eval.gradient - f_ext * (*lambda);
        // Equations: all rows with load control, non-controlled rows without.
        let rows: &[usize] = if with_load { &(0..n).collect::<Vec<_>>() } else { &others };
        let mut r = DVector::zeros(rows.len());
        for (a, &i) in rows.iter().enumerate() {
            r[a] = r_full[i];
        }
        if r.norm() < tol {
            return Ok(());
        }
        let mut jac = DMatrix::zeros(rows.len(), unknowns);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in others.iter().enumerate() {
                jac[(a, b)] = eval.hessian[(i, j)];
            }
            if with_load {
                jac[(a, others.len())] = -f_ext[i];
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| "singular equilibrium tangent".to_string())?;
        for (b, &j) in others.iter().enumerate() {
            d[j] += delta[b];
        }
        if with_load {
            *lambda += delta[others.len()];
        }
    }
    Err("no equilibrium within 60 iterations".into())
}

/// Full solution of a motion design problem.
#[derive(Debug, Clone)]
pub struct MotionSolution {
    pub d_bar: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub j: f64,
    /// Functional value of the predictor motion.
    pub j_predictor: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub samples: Vec<PathSample>,
    /// Recovered external force vector (free spatial dofs) per path node.
    pub forces: Vec<DVector<f64>>,
    /// Negative eigenvalue count of the constraint-reduced Hessian at the
    /// solution; 0 indicates a minimum, larger values a saddle or maximum.
    pub negative_eigenvalues: usize,
}

/// Build the predictor selected in the problem file.
pub fn build_predictor(ctx: &MotionContext<'_>) -> Result<DVector<f64>, SolveError> {
    match &ctx.problem.predictor {
        PredictorSpec::Linear => Ok(predictor_linear(ctx)),
        PredictorSpec::Hierarchical { coarse_elements } => {
            predictor_hierarchical(ctx, coarse_elements)
        }
        PredictorSpec::Preanalysis => predictor_preanalysis(ctx),
    }
}

/// Predictor, monolithic solve and force recovery in one call.
pub fn solve_problem(problem: &MotionProblem) -> Result<MotionSolution, SolveError> {
    let ctx = MotionContext::new(problem)?;
    let d0 = build_predictor(&ctx)?;
    solve_from(&ctx, &d0)
}

/// Solve starting from an explicit predictor motion.
pub fn solve_from(ctx: &MotionContext<'_>, d0: &DVector<f64>) -> Result<MotionSolution, SolveError> {
    let objective = ctx.objective();
    let (j_predictor, _) = evaluate_j(&ctx.system, &objective, d0)?;
    let out = solve_motion(&ctx.system, &objective, &ctx.problem.solver, d0)?;
    let forces = crate::functional::recover_forces(&ctx.system, &objective, &out.d_bar)?;
    let negative_eigenvalues = stationary_point_inertia(&ctx.system, &objective, &out.d_bar, &out.multipliers)?;
    Ok(MotionSolution {
        d_bar: out.d_bar,
        multipliers: out.multipliers,
        j: out.j,
        j_predictor,
        history: out.history,
        converged: out.converged,
        samples: out.samples,
        forces,
        negative_eigenvalues,
    })
}

/// Diagnostic classification of the converged stationary point: count of
/// negative eigenvalues of the Hessian projected onto the constraint null
/// space.
pub fn stationary_point_inertia(
    system: &MotionSystem,
    objective: &dyn Objective,
    d_bar: &DVector<f64>,
    multipliers: &DVector<f64>,
) -> Result<usize, FunctionalError> {
    let asm = assemble(system, objective, d_bar)?;
    let mut k = asm.k_mod;
    let m = system.n_constraints();
    let reduced = if m > 0 {
        add_equal_length_hessian(system, d_bar, multipliers, &mut k);
        let (_, jac) = equal_length_constraints(system, d_bar);
        // Null-space basis of the constraint Jacobian from its SVD.
        let svd = jac.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let tol = 1e-10 * svd.singular_values.max().max(1.0);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let z = v_t.rows(rank, v_t.nrows() - rank).transpose();
        z.transpose() * k * z
    } else {
        k
    };
    if reduced.nrows() == 0 {
        return Ok(0);
    }
    let eig = reduced.symmetric_eigenvalues();
    let scale = eig.amax().max(1e-30);
    Ok(eig.iter().filter(|&&v| v < -1e-8 * scale).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ConfigurationConstraint, Dir, DofValue, Element, ElementKind, Material, Mesh, Node, Support,
    };
    use crate::pathspace::{PathKind, PathMesh};

    /// Single bar stretched along its axis; one free dof. The energy is
    /// monotone along the stretch so the motion problem is almost linear.
    fn single_bar_problem(regularization: Regularization) -> MotionProblem {
        MotionProblem {
            mesh: Mesh {
                nodes: vec![
                    Node { id: 0, x: vec![0.0, 0.0] },
                    Node { id: 1, x: vec![1.0, 0.0] },
                ],
                elements: vec![Element {
                    kind: ElementKind::Truss2d,
                    nodes: vec![0, 1],
                    material: 0,
                }],
                materials: vec![Material::truss(100.0, 1.0)],
                supports: vec![
                    Support { node: 0, dir: Dir::X },
                    Support { node: 0, dir: Dir::Y },
                    Support { node: 1, dir: Dir::Y },
                ],
            },
            path: PathMesh {
                kind: PathKind::Lagrange,
                degree: 1,
                n_elements: 4,
                continuity_reductions: vec![],
            },
            configurations: vec![ConfigurationConstraint {
                path_node: 4,
                partial: true,
                values: vec![DofValue { node: 1, dir: Dir::X, value: 0.3 }],
            }],
            regularization,
            solver: SolverConfig::default(),
            predictor: PredictorSpec::Linear,
        }
    }

    #[test]
    fn single_bar_with_equal_length_converges() {
        let problem = single_bar_problem(Regularization::EqualLength);
        let sol = solve_problem(&problem).unwrap();
        assert!(sol.converged);
        // With one dof and equal lengths the interior nodes spread evenly.
        let ctx = MotionContext::new(&problem).unwrap();
        let (g, _) = equal_length_constraints(&ctx.system, &sol.d_bar);
        assert!(g.amax() < 1e-8, "constraint residual {}", g.amax());
    }

    #[test]
    fn single_bar_with_controlled_dof_is_immediately_stationary() {
        // With the only dof controlled at every path node, nothing is free
        // except nothing: the problem must be rejected or trivially solved.
        let problem = single_bar_problem(Regularization::ControlledDof {
            node: 1,
            dir: Dir::X,
            end_value: None,
        });
        let ctx = MotionContext::new(&problem).unwrap();
        assert_eq!(ctx.system.n_free(), 0);
        let sol = solve_problem(&problem).unwrap();
        assert!(sol.converged);
        assert!(sol.history.len() <= 2);
    }

    #[test]
    fn linear_predictor_interpolates_stages() {
        let mut problem = single_bar_problem(Regularization::EqualLength);
        problem.configurations.insert(
            0,
            ConfigurationConstraint {
                path_node: 2,
                partial: true,
                values: vec![DofValue { node: 1, dir: Dir::X, value: 0.1 }],
            },
        );
        let ctx = MotionContext::new(&problem).unwrap();
        let d0 = predictor_linear(&ctx);
        // Piecewise linear: 0 -> 0.1 over [0, 0.5], 0.1 -> 0.3 over [0.5, 1].
        let expect = [0.0, 0.05, 0.1, 0.2, 0.3];
        for (k, e) in expect.iter().enumerate() {
            assert!((d0[k] - e).abs() < 1e-14, "node {k}: {}", d0[k]);
        }
    }

    #[test]
    fn hierarchical_identity_pipeline() {
        let problem = single_bar_problem(Regularization::EqualLength);
        let ctx = MotionContext::new(&problem).unwrap();
        let d0 = predictor_hierarchical(&ctx, &[4]).unwrap();
        // The "coarse" solve already is the target discretization, so the
        // predictor must itself satisfy stationarity.
        let out = solve_motion(&ctx.system, &ctx.objective(), &problem.solver, &d0).unwrap();
        assert!(out.history.len() <= 2, "already converged");
    }

    #[test]
    fn embedding_reproduces_the_coarse_trajectory() {
        let problem = single_bar_problem(Regularization::EqualLength);
        let coarse = problem.with_overrides(Some(2), None, None, None, None).unwrap();
        let coarse_ctx = MotionContext::new(&coarse).unwrap();
        let coarse_sol = solve_problem(&coarse).unwrap();
        let fine_ctx = MotionContext::new(&problem).unwrap();
        let embedded = embed_motion(&coarse_ctx.system.space, &coarse_sol.d_bar, &fine_ctx.system);
        for k in 0..fine_ctx.system.space.n_nodes() {
            let s = fine_ctx.system.space.greville(k);
            let coarse_val = coarse_ctx.system.configuration(&coarse_sol.d_bar, s);
            assert!((embedded[k] - coarse_val[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn preanalysis_matches_linear_predictor_in_the_stiff_regime() {
        // Tiny stretch: geometric nonlinearity negligible, the equilibrium
        // path is a straight line.
        let mut problem = single_bar_problem(Regularization::EqualLength);
        problem.configurations[0].values[0].value = 1e-4;
        let ctx = MotionContext::new(&problem).unwrap();
        let pre = predictor_preanalysis(&ctx).unwrap();
        let lin = predictor_linear(&ctx);
        assert!((&pre - &lin).amax() < 1e-8);
    }

    #[test]
    fn zero_target_preanalysis_is_zero() {
        let mut problem = single_bar_problem(Regularization::EqualLength);
        problem.configurations[0].values[0].value = 0.0;
        let ctx = MotionContext::new(&problem).unwrap();
        let pre = predictor_preanalysis(&ctx).unwrap();
        assert_eq!(pre.amax(), 0.0);
    }

    #[test]
    fn relaxation_keeps_residuals_monotone() {
        let problem = single_bar_problem(Regularization::EqualLength);
        let sol = solve_problem(&problem).unwrap();
        for w in sol.history.windows(2) {
            assert!(
                w[1].residual_norm < w[0].residual_norm || w[1].forced,
                "residual increased without a forced step"
            );
        }
    }

    #[test]
    fn divergence_reports_history() {
        // A two-dof problem (bar free to swing sideways) needs several
        // Newton iterations; a budget of one must report divergence.
        let mut problem = single_bar_problem(Regularization::EqualLength);
        problem.mesh.supports.pop();
        problem.configurations[0].values.push(DofValue {
            node: 1,
            dir: Dir::Y,
            value: 0.8,
        });
        problem.solver.max_iterations = 1;
        match solve_problem(&problem) {
            Err(e @ SolveError::Diverged { .. }) => {
                assert!(!e.history().is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
