//! The motion functional and its monolithic residual and tangent.
//!
//! The functional is `J = int_0^1 F(D(s)) s_u(D'(s)) ds` with `F` the
//! objective density (internal strain energy by default). Stationarity of J
//! with respect to every free path dof yields the residual `R_mod`; its
//! linearization the tangent `K_mod`. Both are assembled by looping over the
//! path elements and their Gauss points, re-evaluating the spatial state at
//! the interpolated configuration of each point.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::elements::{element_state, tributary_volume, ElementError};
use crate::model::{DofMap, Mesh, ModelError, MotionProblem, Regularization};
use crate::pathspace::{arc_length_state, path_element_length, PathSpace};

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        source: ElementError,
    },
    #[error("objective undefined: {0}")]
    Domain(String),
}

/// Value, gradient and Hessian of an objective density at one configuration.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A pluggable objective density `F(D)`. Any quantity with analytic first
/// and second derivatives with respect to the spatial dofs can drive the
/// motion design.
pub trait Objective {
    fn eval(&self, d: &DVector<f64>) -> Result<ObjectiveEval, FunctionalError>;

    /// Value only; override when derivatives are expensive.
    fn value(&self, d: &DVector<f64>) -> Result<f64, FunctionalError> {
        Ok(self.eval(d)?.value)
    }
}

/// The default objective: internal strain energy, with gradient `F_int` and
/// Hessian `K_T` assembled from the spatial elements.
pub struct InternalEnergy<'a> {
    mesh: &'a Mesh,
    dof_map: &'a DofMap,
}

impl<'a> InternalEnergy<'a> {
    pub fn new(mesh: &'a Mesh, dof_map: &'a DofMap) -> Self {
        Self { mesh, dof_map }
    }

    /// Expand free dofs into the full per-node displacement field.
    fn expand(&self, d: &DVector<f64>) -> DVector<f64> {
        let dim = self.dof_map.dim();
        let mut full = DVector::zeros(self.mesh.nodes.len() * dim);
        for (i, &(node, dir)) in self.dof_map.dofs().iter().enumerate() {
            full[node * dim + dir.index()] = d[i];
        }
        full
    }

    /// Assembled internal force on the free dofs (used for force recovery
    /// and the preanalysis predictor).
    pub fn internal_force(&self, d: &DVector<f64>) -> Result<DVector<f64>, FunctionalError> {
        Ok(self.eval(d)?.gradient)
    }
}

impl Objective for InternalEnergy<'_> {
    fn eval(&self, d: &DVector<f64>) -> Result<ObjectiveEval, FunctionalError> {
        let n = self.dof_map.n_dof();
        let dim = self.dof_map.dim();
        let full = self.expand(d);
        let mut value = 0.0;
        let mut gradient = DVector::zeros(n);
        let mut hessian = DMatrix::zeros(n, n);
        for e in 0..self.mesh.elements.len() {
            let st = element_state(self.mesh, e, &full)
                .map_err(|source| FunctionalError::Element { element: e, source })?;
            value += st.energy;
            let nodes = &self.mesh.elements[e].nodes;
            let mut map = Vec::with_capacity(nodes.len() * dim);
            for &node in nodes {
                for c in 0..dim {
                    map.push(self.dof_map.index_of(node, crate::model::Dir::from_index(c)));
                }
            }
            for (l, &gl) in map.iter().enumerate() {
                let Some(gl) = gl else { continue };
                gradient[gl] += st.f_int[l];
                for (m, &gm) in map.iter().enumerate() {
                    if let Some(gm) = gm {
                        hessian[(gl, gm)] += st.k_t[(l, m)];
                    }
                }
            }
        }
        Ok(ObjectiveEval {
            value,
            gradient,
            hessian,
        })
    }

    fn value(&self, d: &DVector<f64>) -> Result<f64, FunctionalError> {
        let full = self.expand(d);
        let mut value = 0.0;
        for e in 0..self.mesh.elements.len() {
            value += element_state(self.mesh, e, &full)
                .map_err(|source| FunctionalError::Element { element: e, source })?
                .energy;
        }
        Ok(value)
    }
}

/// The lowered motion problem: path space, dof weights and the prescription
/// table over all path dofs. Everything the assembly and the solver need,
/// independent of where the objective comes from.
#[derive(Debug, Clone)]
pub struct MotionSystem {
    pub n_dof: usize,
    /// Tributary volume fraction V_k/V per spatial dof.
    pub weights: DVector<f64>,
    pub space: PathSpace,
    /// Arc length regularization floor.
    pub floor: f64,
    /// Prescribed value per path dof (path-node major), None when free.
    pub prescribed: Vec<Option<f64>>,
    /// Full indices of the free path dofs.
    pub free: Vec<usize>,
    full_to_free: Vec<Option<usize>>,
    /// Equal-length regularization active (adds n_elements - 1 constraints).
    pub equal_length: bool,
}

impl MotionSystem {
    pub fn new(
        n_dof: usize,
        weights: DVector<f64>,
        space: PathSpace,
        floor: f64,
        prescribed: Vec<Option<f64>>,
        equal_length: bool,
    ) -> Self {
        debug_assert_eq!(prescribed.len(), space.n_nodes() * n_dof);
        let mut free = Vec::new();
        let mut full_to_free = vec![None; prescribed.len()];
        for (i, p) in prescribed.iter().enumerate() {
            if p.is_none() {
                full_to_free[i] = Some(free.len());
                free.push(i);
            }
        }
        Self {
            n_dof,
            weights,
            space,
            floor,
            prescribed,
            free,
            full_to_free,
            equal_length,
        }
    }

    pub fn n_total(&self) -> usize {
        self.prescribed.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Number of equal-length constraints.
    pub fn n_constraints(&self) -> usize {
        if self.equal_length {
            self.space.n_elements() - 1
        } else {
            0
        }
    }

    /// Overwrite prescribed entries with their exact values.
    pub fn apply_prescribed(&self, d_bar: &mut DVector<f64>) {
        for (i, p) in self.prescribed.iter().enumerate() {
            if let Some(v) = p {
                d_bar[i] = *v;
            }
        }
    }

    /// Gather the free entries of a full vector.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    /// Scatter free entries into a full vector (prescribed entries zero).
    pub fn expand_free(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_total());
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = free[k];
        }
        full
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.full_to_free[full]
    }

    /// Interpolated configuration at path parameter `s`.
    pub fn configuration(&self, d_bar: &DVector<f64>, s: f64) -> DVector<f64> {
        self.space.interpolate(d_bar, self.n_dof, s)
    }
}

/// One quadrature-point diagnostic along the path.
#[derive(Debug, Clone, Copy)]
pub struct PathSample {
    /// Path parameter in [0, 1].
    pub s: f64,
    /// Running arc length coordinate up to this point.
    pub arclength: f64,
    /// Arc length rate here.
    pub s_u: f64,
    /// Objective density here (internal energy for the default objective).
    pub f_value: f64,
    /// Path element owning the sample.
    pub element: usize,
}

/// Assembled residual and tangent of the functional at one motion state.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Functional value.
    pub j: f64,
    /// Gradient of J restricted to the free path dofs.
    pub r_mod: DVector<f64>,
    /// Hessian of J on the free path dofs (symmetric).
    pub k_mod: DMatrix<f64>,
    /// Per-quadrature-point diagnostics.
    pub samples: Vec<PathSample>,
    /// True when a stationary segment hit the arc length floor.
    pub floored: bool,
}

/// Evaluate the functional and the per-point diagnostics only.
pub fn evaluate_j(
    system: &MotionSystem,
    objective: &dyn Objective,
    d_bar: &DVector<f64>,
) -> Result<(f64, Vec<PathSample>), FunctionalError> {
    let mut j = 0.0;
    let mut arc_running = 0.0;
    let mut samples = Vec::new();
    for e in 0..system.space.n_elements() {
        for &(s, w) in system.space.quadrature(e) {
            let (d, d_s) = interpolate_state(system, d_bar, e, s);
            let f = objective.value(&d)?;
            let arc = arc_length_state(&d_s, &system.weights, system.floor);
            j += w * f * arc.s_u;
            let half = 0.5 * w * arc.s_u;
            samples.push(PathSample {
                s,
                arclength: arc_running + half,
                s_u: arc.s_u,
                f_value: f,
                element: e,
            });
            arc_running += w * arc.s_u;
        }
    }
    Ok((j, samples))
}

/// Value of J restricted to one path element (diagnostic; the sum over all
/// elements equals the full J).
pub fn evaluate_j_element(
    system: &MotionSystem,
    objective: &dyn Objective,
    d_bar: &DVector<f64>,
    element: usize,
) -> Result<f64, FunctionalError> {
    let mut j = 0.0;
    for &(s, w) in system.space.quadrature(element) {
        let (d, d_s) = interpolate_state(system, d_bar, element, s);
        let f = objective.value(&d)?;
        let arc = arc_length_state(&d_s, &system.weights, system.floor);
        j += w * f * arc.s_u;
    }
    Ok(j)
}

fn interpolate_state(
    system: &MotionSystem,
    d_bar: &DVector<f64>,
    element: usize,
    s: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = system.n_dof;
    let sh = system.space.eval_in_element(element, s);
    let mut d = DVector::zeros(n);
    let mut d_s = DVector::zeros(n);
    for (idx, &node) in sh.nodes.iter().enumerate() {
        let base = node * n;
        for i in 0..n {
            d[i] += sh.n[idx] * d_bar[base + i];
            d_s[i] += sh.dn[idx] * d_bar[base + i];
        }
    }
    (d, d_s)
}

/// Assemble J, its gradient and Hessian over the free path dofs.
pub fn assemble(
    system: &MotionSystem,
    objective: &dyn Objective,
    d_bar: &DVector<f64>,
) -> Result<AssembledSystem, FunctionalError> {
    let n = system.n_dof;
    let n_total = system.n_total();
    let mut j = 0.0;
    let mut arc_running = 0.0;
    let mut floored = false;
    let mut samples = Vec::new();
    let mut r_full = DVector::zeros(n_total);
    let mut k_full = DMatrix::zeros(n_total, n_total);

    for e in 0..system.space.n_elements() {
        for &(s, w) in system.space.quadrature(e) {
            let sh = system.space.eval_in_element(e, s);
            let (d, d_s) = interpolate_state(system, d_bar, e, s);
            let obj = objective.eval(&d)?;
            let arc = arc_length_state(&d_s, &system.weights, system.floor);
            floored |= arc.floored;

            j += w * obj.value * arc.s_u;
            let half = 0.5 * w * arc.s_u;
            samples.push(PathSample {
                s,
                arclength: arc_running + half,
                s_u: arc.s_u,
                f_value: obj.value,
                element: e,
            });
            arc_running += w * arc.s_u;

            for (ia, &a) in sh.nodes.iter().enumerate() {
                let ra = a * n;
                let (na, da) = (sh.n[ia], sh.dn[ia]);
                for i in 0..n {
                    r_full[ra + i] += w * (na * obj.gradient[i] * arc.s_u + da * arc.grad[i] * obj.value);
                }
                for (ib, &b) in sh.nodes.iter().enumerate() {
                    let cb = b * n;
                    let (nb, db) = (sh.n[ib], sh.dn[ib]);
                    let c1 = w * na * nb * arc.s_u;
                    let c2 = w * na * db;
                    let c3 = w * da * nb;
                    for i in 0..n {
                        let gi = obj.gradient[i];
                        let si = arc.grad[i];
                        for k in 0..n {
                            k_full[(ra + i, cb + k)] +=
                                c1 * obj.hessian[(i, k)] + c2 * gi * arc.grad[k] + c3 * si * obj.gradient[k];
                        }
                    }
                    arc.add_scaled_hessian_to(w * da * db * obj.value, &mut k_full, ra, cb);
                }
            }
        }
    }

    let n_free = system.n_free();
    let r_mod = system.restrict(&r_full);
    let mut k_mod = DMatrix::zeros(n_free, n_free);
    for (i, &fi) in system.free.iter().enumerate() {
        for (k, &fk) in system.free.iter().enumerate() {
            k_mod[(i, k)] = k_full[(fi, fk)];
        }
    }

    Ok(AssembledSystem {
        j,
        r_mod,
        k_mod,
        samples,
        floored,
    })
}

/// Equal-length constraint values `g_e = L_e - L_{e+1}` and their Jacobian
/// with respect to the free path dofs.
pub fn equal_length_constraints(
    system: &MotionSystem,
    d_bar: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n_ele = system.space.n_elements();
    let m = n_ele - 1;
    let mut lengths = Vec::with_capacity(n_ele);
    let mut grads = Vec::with_capacity(n_ele);
    for e in 0..n_ele {
        let (l, g) = path_element_length(&system.space, &system.weights, system.floor, d_bar, e);
        lengths.push(l);
        grads.push(g);
    }
    let mut g = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, system.n_free());
    for c in 0..m {
        g[c] = lengths[c] - lengths[c + 1];
        let diff = &grads[c] - &grads[c + 1];
        for (i, &fi) in system.free.iter().enumerate() {
            jac[(c, i)] = diff[fi];
        }
    }
    (g, jac)
}

/// Total path length by the element quadrature.
pub fn total_path_length(system: &MotionSystem, d_bar: &DVector<f64>) -> f64 {
    (0..system.space.n_elements())
        .map(|e| path_element_length(&system.space, &system.weights, system.floor, d_bar, e).0)
        .sum()
}

/// Add the multiplier-weighted second derivative of the equal-length
/// constraints into a matrix over the free dofs (exact Newton on the KKT
/// system).
pub fn add_equal_length_hessian(
    system: &MotionSystem,
    d_bar: &DVector<f64>,
    multipliers: &DVector<f64>,
    k: &mut DMatrix<f64>,
) {
    let n_ele = system.space.n_elements();
    let n = system.n_dof;
    // Element e appears in constraint e (+1) and constraint e-1 (-1).
    for e in 0..n_ele {
        let mut coeff = 0.0;
        if e < n_ele - 1 {
            coeff += multipliers[e];
        }
        if e > 0 {
            coeff -= multipliers[e - 1];
        }
        if coeff == 0.0 {
            continue;
        }
        for &(s, w) in system.space.quadrature(e) {
            let sh = system.space.eval_in_element(e, s);
            let (_, d_s) = interpolate_state(system, d_bar, e, s);
            let arc = arc_length_state(&d_s, &system.weights, system.floor);
            // Dense scratch block, then scatter the free entries.
            let mut h = DMatrix::zeros(n, n);
            arc.add_scaled_hessian_to(1.0, &mut h, 0, 0);
            for (ia, &a) in sh.nodes.iter().enumerate() {
                for (ib, &b) in sh.nodes.iter().enumerate() {
                    let c = coeff * w * sh.dn[ia] * sh.dn[ib];
                    for i in 0..n {
                        let Some(fi) = system.free_index(a * n + i) else {
                            continue;
                        };
                        for l in 0..n {
                            if let Some(fl) = system.free_index(b * n + l) {
                                k[(fi, fl)] += c * h[(i, l)];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Spatial internal force vectors recovered at every path node; at a
/// converged motion these are the external forces required to realize each
/// configuration.
pub fn recover_forces(
    system: &MotionSystem,
    objective: &InternalEnergy<'_>,
    d_bar: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, FunctionalError> {
    let mut out = Vec::with_capacity(system.space.n_nodes());
    for k in 0..system.space.n_nodes() {
        let s = system.space.greville(k);
        let d = system.configuration(d_bar, s);
        out.push(objective.internal_force(&d)?);
    }
    Ok(out)
}

/// Everything needed to run one problem: its dof map and lowered system.
pub struct MotionContext<'a> {
    pub problem: &'a MotionProblem,
    pub dof_map: DofMap,
    pub system: MotionSystem,
}

impl<'a> MotionContext<'a> {
    pub fn new(problem: &'a MotionProblem) -> Result<Self, ModelError> {
        let dof_map = problem.dof_map();
        let space = PathSpace::build(&problem.path)?;
        let n_dof = dof_map.n_dof();

        let (volumes, total) = tributary_volume(&problem.mesh);
        let weights = DVector::from_iterator(
            n_dof,
            dof_map.dofs().iter().map(|&(node, _)| volumes[node] / total),
        );

        let n_nodes = space.n_nodes();
        let mut prescribed: Vec<Option<f64>> = vec![None; n_nodes * n_dof];
        // The initial configuration is the reference state.
        for entry in prescribed.iter_mut().take(n_dof) {
            *entry = Some(0.0);
        }
        for c in &problem.configurations {
            let cp = space.interpolatory_node(c.path_node)?;
            for v in &c.values {
                let dof = dof_map
                    .index_of(v.node, v.dir)
                    .expect("validated configuration dof");
                prescribed[cp * n_dof + dof] = Some(v.value);
            }
        }
        if let Regularization::ControlledDof {
            node,
            dir,
            end_value,
        } = &problem.regularization
        {
            let dof = dof_map.index_of(*node, *dir).expect("validated controlled dof");
            let schedule = controlled_schedule(problem, &space, dof, n_dof, &prescribed, *end_value);
            for (k, value) in schedule.into_iter().enumerate() {
                prescribed[k * n_dof + dof] = Some(value);
            }
        }
        let floor = 1e-10 * problem.mesh.characteristic_length();
        let equal_length = matches!(problem.regularization, Regularization::EqualLength);
        let system = MotionSystem::new(n_dof, weights, space, floor, prescribed, equal_length);
        Ok(Self {
            problem,
            dof_map,
            system,
        })
    }

    pub fn objective(&self) -> InternalEnergy<'_> {
        InternalEnergy::new(&self.problem.mesh, &self.dof_map)
    }

    pub fn evaluate_j(&self, d_bar: &DVector<f64>) -> Result<(f64, Vec<PathSample>), FunctionalError> {
        evaluate_j(&self.system, &self.objective(), d_bar)
    }

    pub fn assemble(&self, d_bar: &DVector<f64>) -> Result<AssembledSystem, FunctionalError> {
        assemble(&self.system, &self.objective(), d_bar)
    }

    pub fn recover_forces(&self, d_bar: &DVector<f64>) -> Result<Vec<DVector<f64>>, FunctionalError> {
        recover_forces(&self.system, &self.objective(), d_bar)
    }

    /// Configuration snapshots at every path node (free spatial dofs).
    pub fn snapshots(&self, d_bar: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.system.space.n_nodes())
            .map(|k| self.system.configuration(d_bar, self.system.space.greville(k)))
            .collect()
    }
}

/// Piecewise-linear schedule of the controlled dof, sampled at the Greville
/// abscissa of every path node. Prescribed stage values act as interpolation
/// points; between them the increments are uniform.
fn controlled_schedule(
    problem: &MotionProblem,
    space: &PathSpace,
    dof: usize,
    n_dof: usize,
    prescribed: &[Option<f64>],
    end_value: Option<f64>,
) -> Vec<f64> {
    let mut knots: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for c in &problem.configurations {
        let cp = space
            .interpolatory_node(c.path_node)
            .expect("validated configuration");
        if let Some(v) = prescribed[cp * n_dof + dof] {
            knots.push((space.greville(cp), v));
        }
    }
    if let Some(v) = end_value {
        if !knots.iter().any(|&(s, _)| s == 1.0) {
            knots.push((1.0, v));
        }
    }
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eval = |s: f64| -> f64 {
        let mut prev = knots[0];
        for &k in &knots[1..] {
            if s <= k.0 {
                let t = (s - prev.0) / (k.0 - prev.0);
                return prev.1 + t * (k.1 - prev.1);
            }
            prev = k;
        }
        prev.1
    };
    (0..space.n_nodes()).map(|k| eval(space.greville(k))).collect()
}

/// Energy-vs-arclength table row.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRow {
    pub arclength: f64,
    pub s_u: f64,
    pub pi_int: f64,
}

/// Quadrature samples plus exact boundary and breakpoint rows, sorted along
/// the path (the last row is the target configuration).
pub fn energy_rows(
    system: &MotionSystem,
    objective: &dyn Objective,
    d_bar: &DVector<f64>,
) -> Result<Vec<EnergyRow>, FunctionalError> {
    let (_, samples) = evaluate_j(system, objective, d_bar)?;
    let mut rows: Vec<(f64, EnergyRow)> = samples
        .iter()
        .map(|p| {
            (
                p.s,
                EnergyRow {
                    arclength: p.arclength,
                    s_u: p.s_u,
                    pi_int: p.f_value,
                },
            )
        })
        .collect();
    // Breakpoint rows with exact partial arc lengths.
    let mut partial = 0.0;
    let n_ele = system.space.n_elements();
    for b in 0..=n_ele {
        let s = system.space.breakpoints()[b];
        // One-sided evaluation: the last breakpoint belongs to the last
        // element.
        let element = if b == n_ele { n_ele - 1 } else { b };
        let sh = system.space.eval_in_element(element, s);
        let n = system.n_dof;
        let mut d = DVector::zeros(n);
        let mut d_s = DVector::zeros(n);
        for (idx, &node) in sh.nodes.iter().enumerate() {
            for i in 0..n {
                d[i] += sh.n[idx] * d_bar[node * n + i];
                d_s[i] += sh.dn[idx] * d_bar[node * n + i];
            }
        }
        let f = objective.value(&d)?;
        let arc = arc_length_state(&d_s, &system.weights, system.floor);
        rows.push((
            s,
            EnergyRow {
                arclength: partial,
                s_u: arc.s_u,
                pi_int: f,
            },
        ));
        if b < n_ele {
            partial += path_element_length(&system.space, &system.weights, system.floor, d_bar, b).0;
        }
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Render energy rows as CSV (the plot interchange format).
pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut out = String::from("arclength,s_u,Pi_int\n");
    for r in rows {
        out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", r.arclength, r.s_u, r.pi_int));
    }
    out
}
