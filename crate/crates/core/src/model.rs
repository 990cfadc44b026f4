//! Structures, materials, configuration constraints and the problem file.
//!
//! A problem file is a single JSON document describing the spatial mesh, the
//! path discretization, the prescribed configurations along the motion, the
//! regularization that removes the parametrization non-uniqueness, and solver
//! settings. Loading validates every invariant up front so that the numeric
//! pipeline can assume a consistent problem.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pathspace::{PathError, PathMesh, PathSpace};
use crate::solver::SolverConfig;

/// Spatial direction of a degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    X,
    Y,
    Z,
}

impl Dir {
    pub fn index(self) -> usize {
        match self {
            Dir::X => 0,
            Dir::Y => 1,
            Dir::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Dir {
        match i {
            0 => Dir::X,
            1 => Dir::Y,
            2 => Dir::Z,
            _ => panic!("direction index {i}"),
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::X => "x",
            Dir::Y => "y",
            Dir::Z => "z",
        })
    }
}

/// A mesh node with its reference coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    #[serde(rename = "coords")]
    pub x: Vec<f64>,
}

/// Linear elastic material parameters. Which fields are required depends on
/// the element kind: bars need the cross-section area, quads the Poisson
/// ratio and thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub youngs_modulus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
}

impl Material {
    pub fn truss(youngs_modulus: f64, area: f64) -> Self {
        Self {
            youngs_modulus,
            poisson_ratio: None,
            area: Some(area),
            thickness: None,
        }
    }

    pub fn plane_stress(youngs_modulus: f64, poisson_ratio: f64, thickness: f64) -> Self {
        Self {
            youngs_modulus,
            poisson_ratio: Some(poisson_ratio),
            area: None,
            thickness: Some(thickness),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Truss2d,
    Truss3d,
    Quad4,
    Quad4Eas,
}

impl ElementKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Truss2d | ElementKind::Truss3d => 2,
            ElementKind::Quad4 | ElementKind::Quad4Eas => 4,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ElementKind::Truss3d => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub nodes: Vec<usize>,
    pub material: usize,
}

/// A homogeneous (zero) spatial support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub node: usize,
    pub dir: Dir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    pub materials: Vec<Material>,
    #[serde(default)]
    pub supports: Vec<Support>,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(2, |n| n.x.len())
    }

    /// Largest node-to-node distance; the characteristic length used for
    /// finite-difference steps and the arc length floor.
    pub fn characteristic_length(&self) -> f64 {
        let mut max = 0.0_f64;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                let d: f64 = a
                    .x
                    .iter()
                    .zip(&b.x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                max = max.max(d);
            }
        }
        if max == 0.0 {
            1.0
        } else {
            max
        }
    }
}

/// One prescribed dof value inside a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofValue {
    pub node: usize,
    pub dir: Dir,
    pub value: f64,
}

/// Prescribed displacements of one configuration along the motion. The path
/// node id counts element boundaries (breakpoints) of the path mesh, so id
/// `n_elements` is the target configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationConstraint {
    pub path_node: usize,
    /// A partial configuration pins only the listed dofs; a full one must
    /// cover every free dof.
    #[serde(default)]
    pub partial: bool,
    pub values: Vec<DofValue>,
}

/// Regularization removing the non-uniqueness of the path parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regularization {
    /// Prescribe one spatial dof at every path node, with uniform increments
    /// between the prescribed configurations.
    ControlledDof {
        node: usize,
        dir: Dir,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end_value: Option<f64>,
    },
    /// Enforce equal path element lengths with Lagrange multipliers.
    EqualLength,
}

/// Initial guess strategy for the whole motion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictorSpec {
    #[default]
    Linear,
    /// Solve on coarser path meshes first and interpolate upward.
    Hierarchical { coarse_elements: Vec<usize> },
    /// Displacement-controlled equilibrium continuation toward the target
    /// internal force state.
    Preanalysis,
}

/// The full run description: mesh, path, constraints, regularization and
/// solver settings. Immutable after load; shares read-only across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProblem {
    #[serde(flatten)]
    pub mesh: Mesh,
    pub path: PathMesh,
    #[serde(default)]
    pub configurations: Vec<ConfigurationConstraint>,
    pub regularization: Regularization,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub predictor: PredictorSpec,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node ids must be contiguous from 0: node at position {pos} has id {id}")]
    NodeIds { pos: usize, id: usize },
    #[error("node {0} has a non-finite coordinate")]
    NonFiniteCoordinate(usize),
    #[error("node {node} has {got} coordinates, expected {expected} (mixed dimensions)")]
    MixedDimension {
        node: usize,
        got: usize,
        expected: usize,
    },
    #[error("mesh dimension {0} is not supported (2 or 3)")]
    BadDimension(usize),
    #[error("material {0}: Young's modulus must be positive")]
    BadYoungsModulus(usize),
    #[error("material {0}: Poisson's ratio must lie in [0, 0.5)")]
    BadPoissonRatio(usize),
    #[error("material {0}: {1} must be positive")]
    BadMaterialParameter(usize, &'static str),
    #[error("element {element} references missing node {node}")]
    DanglingNode { element: usize, node: usize },
    #[error("element {element} references missing material {material}")]
    DanglingMaterial { element: usize, material: usize },
    #[error("element {element}: {kind:?} needs {expected} nodes, got {got}")]
    WrongNodeCount {
        element: usize,
        kind: ElementKind,
        expected: usize,
        got: usize,
    },
    #[error("element {element}: {kind:?} requires a {dim}-dimensional mesh")]
    WrongElementDimension {
        element: usize,
        kind: ElementKind,
        dim: usize,
    },
    #[error("element {1}: material lacks {0}")]
    MissingMaterialField(&'static str, usize),
    #[error("element {element} is degenerate or inverted: {detail}")]
    BadElementGeometry { element: usize, detail: String },
    #[error("support {0} references missing node {1}")]
    DanglingSupport(usize, usize),
    #[error("support {0}: direction outside the mesh dimension")]
    SupportDirOutOfRange(usize),
    #[error("duplicate support on node {0} direction {1}")]
    DuplicateSupport(usize, Dir),
    #[error("mesh is fully supported: nothing can move")]
    FullySupported,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("configuration at path node {0}: node 0 is the initial configuration and is implicitly zero")]
    InitialConfigurationOverride(usize),
    #[error("configuration references path node {got}, but the path has breakpoints 0..={max}")]
    ConfigPathNodeOutOfRange { got: usize, max: usize },
    #[error("configuration at path node {path_node}: {detail}")]
    BadConfiguration { path_node: usize, detail: String },
    #[error("no configuration constraint beyond the initial one; the motion is unconstrained")]
    NoTargetConstraint,
    #[error("controlled dof {node}/{dir} {detail}")]
    BadControlledDof {
        node: usize,
        dir: Dir,
        detail: String,
    },
    #[error("override error: {0}")]
    Override(String),
    #[error("mesh has no nodes")]
    EmptyMesh,
}

/// Bijection between free (node, direction) pairs and global spatial dof
/// indices; supported dofs carry no index.
#[derive(Debug, Clone)]
pub struct DofMap {
    dim: usize,
    index: Vec<Option<usize>>,
    dofs: Vec<(usize, Dir)>,
}

impl DofMap {
    pub fn n_dof(&self) -> usize {
        self.dofs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global dof index of (node, dir), or None when supported.
    pub fn index_of(&self, node: usize, dir: Dir) -> Option<usize> {
        self.index[node * self.dim + dir.index()]
    }

    /// Reverse lookup.
    pub fn dof(&self, index: usize) -> (usize, Dir) {
        self.dofs[index]
    }

    pub fn dofs(&self) -> &[(usize, Dir)] {
        &self.dofs
    }
}

/// Number the free spatial dofs node-major, skipping supported directions.
pub fn build_dof_map(mesh: &Mesh) -> DofMap {
    let dim = mesh.dim();
    let mut supported = vec![false; mesh.nodes.len() * dim];
    for s in &mesh.supports {
        supported[s.node * dim + s.dir.index()] = true;
    }
    let mut index = vec![None; mesh.nodes.len() * dim];
    let mut dofs = Vec::new();
    for n in 0..mesh.nodes.len() {
        for d in 0..dim {
            if !supported[n * dim + d] {
                index[n * dim + d] = Some(dofs.len());
                dofs.push((n, Dir::from_index(d)));
            }
        }
    }
    DofMap { dim, index, dofs }
}

/// Load and validate a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<MotionProblem, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    problem_from_json(&text, &path.display().to_string())
}

/// Parse and validate a problem from JSON text.
pub fn problem_from_json(text: &str, origin: &str) -> Result<MotionProblem, ModelError> {
    let problem: MotionProblem =
        serde_json::from_str(text).map_err(|e| ModelError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    problem.validate()?;
    Ok(problem)
}

impl MotionProblem {
    /// Serialize back to the problem file format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialization")
    }

    pub fn dof_map(&self) -> DofMap {
        build_dof_map(&self.mesh)
    }

    /// Check every invariant; called by [`load_problem`].
    pub fn validate(&self) -> Result<(), ModelError> {
        let mesh = &self.mesh;
        if mesh.nodes.is_empty() {
            return Err(ModelError::EmptyMesh);
        }
        let dim = mesh.dim();
        if dim != 2 && dim != 3 {
            return Err(ModelError::BadDimension(dim));
        }
        for (pos, node) in mesh.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(ModelError::NodeIds { pos, id: node.id });
            }
            if node.x.len() != dim {
                return Err(ModelError::MixedDimension {
                    node: node.id,
                    got: node.x.len(),
                    expected: dim,
                });
            }
            if node.x.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteCoordinate(node.id));
            }
        }
        for (i, m) in mesh.materials.iter().enumerate() {
            if m.youngs_modulus <= 0.0 || m.youngs_modulus.is_nan() {
                return Err(ModelError::BadYoungsModulus(i));
            }
            if let Some(nu) = m.poisson_ratio {
                if !(0.0..0.5).contains(&nu) {
                    return Err(ModelError::BadPoissonRatio(i));
                }
            }
            if let Some(a) = m.area {
                if a <= 0.0 || a.is_nan() {
                    return Err(ModelError::BadMaterialParameter(i, "area"));
                }
            }
            if let Some(t) = m.thickness {
                if t <= 0.0 || t.is_nan() {
                    return Err(ModelError::BadMaterialParameter(i, "thickness"));
                }
            }
        }
        for (e, ele) in mesh.elements.iter().enumerate() {
            if ele.kind.dim() != dim {
                return Err(ModelError::WrongElementDimension {
                    element: e,
                    kind: ele.kind,
                    dim: ele.kind.dim(),
                });
            }
            if ele.nodes.len() != ele.kind.n_nodes() {
                return Err(ModelError::WrongNodeCount {
                    element: e,
                    kind: ele.kind,
                    expected: ele.kind.n_nodes(),
                    got: ele.nodes.len(),
                });
            }
            for &n in &ele.nodes {
                if n >= mesh.nodes.len() {
                    return Err(ModelError::DanglingNode { element: e, node: n });
                }
            }
            if ele.material >= mesh.materials.len() {
                return Err(ModelError::DanglingMaterial {
                    element: e,
                    material: ele.material,
                });
            }
            let mat = &mesh.materials[ele.material];
            match ele.kind {
                ElementKind::Truss2d | ElementKind::Truss3d => {
                    if mat.area.is_none() {
                        return Err(ModelError::MissingMaterialField("area", e));
                    }
                }
                ElementKind::Quad4 | ElementKind::Quad4Eas => {
                    if mat.poisson_ratio.is_none() {
                        return Err(ModelError::MissingMaterialField("poisson_ratio", e));
                    }
                    if mat.thickness.is_none() {
                        return Err(ModelError::MissingMaterialField("thickness", e));
                    }
                }
            }
            // Geometry check at the reference state (catches inverted quads
            // and zero-length bars).
            let zero = nalgebra::DVector::zeros(mesh.nodes.len() * dim);
            if let Err(err) = crate::elements::element_state(mesh, e, &zero) {
                return Err(ModelError::BadElementGeometry {
                    element: e,
                    detail: err.to_string(),
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, s) in mesh.supports.iter().enumerate() {
            if s.node >= mesh.nodes.len() {
                return Err(ModelError::DanglingSupport(i, s.node));
            }
            if s.dir.index() >= dim {
                return Err(ModelError::SupportDirOutOfRange(i));
            }
            if !seen.insert((s.node, s.dir)) {
                return Err(ModelError::DuplicateSupport(s.node, s.dir));
            }
        }
        let dof_map = build_dof_map(mesh);
        if dof_map.n_dof() == 0 {
            return Err(ModelError::FullySupported);
        }

        let space = PathSpace::build(&self.path)?;
        let n_break = self.path.n_elements;
        let mut config_nodes = std::collections::BTreeSet::new();
        for c in &self.configurations {
            if c.path_node == 0 {
                return Err(ModelError::InitialConfigurationOverride(0));
            }
            if c.path_node > n_break {
                return Err(ModelError::ConfigPathNodeOutOfRange {
                    got: c.path_node,
                    max: n_break,
                });
            }
            if !config_nodes.insert(c.path_node) {
                return Err(ModelError::BadConfiguration {
                    path_node: c.path_node,
                    detail: "duplicate configuration for this path node".into(),
                });
            }
            // Interior configurations must sit on an interpolatory breakpoint.
            space.interpolatory_node(c.path_node)?;
            let mut dofs_here = std::collections::BTreeSet::new();
            for v in &c.values {
                if v.node >= mesh.nodes.len() {
                    return Err(ModelError::BadConfiguration {
                        path_node: c.path_node,
                        detail: format!("references missing node {}", v.node),
                    });
                }
                if v.dir.index() >= dim {
                    return Err(ModelError::BadConfiguration {
                        path_node: c.path_node,
                        detail: format!("direction {} outside mesh dimension", v.dir),
                    });
                }
                if !v.value.is_finite() {
                    return Err(ModelError::BadConfiguration {
                        path_node: c.path_node,
                        detail: format!("non-finite value for node {} {}", v.node, v.dir),
                    });
                }
                if dof_map.index_of(v.node, v.dir).is_none() {
                    return Err(ModelError::BadConfiguration {
                        path_node: c.path_node,
                        detail: format!("node {} {} is supported", v.node, v.dir),
                    });
                }
                if !dofs_here.insert((v.node, v.dir)) {
                    return Err(ModelError::BadConfiguration {
                        path_node: c.path_node,
                        detail: format!("node {} {} prescribed twice", v.node, v.dir),
                    });
                }
            }
            if !c.partial && dofs_here.len() != dof_map.n_dof() {
                return Err(ModelError::BadConfiguration {
                    path_node: c.path_node,
                    detail: format!(
                        "full configuration covers {} of {} free dofs",
                        dofs_here.len(),
                        dof_map.n_dof()
                    ),
                });
            }
        }

        match &self.regularization {
            Regularization::ControlledDof {
                node,
                dir,
                end_value,
            } => {
                if *node >= mesh.nodes.len() || dir.index() >= dim {
                    return Err(ModelError::BadControlledDof {
                        node: *node,
                        dir: *dir,
                        detail: "does not exist".into(),
                    });
                }
                if dof_map.index_of(*node, *dir).is_none() {
                    return Err(ModelError::BadControlledDof {
                        node: *node,
                        dir: *dir,
                        detail: "is supported".into(),
                    });
                }
                let in_configs = self.configurations.iter().any(|c| {
                    c.values
                        .iter()
                        .any(|v| v.node == *node && v.dir == *dir)
                });
                if end_value.is_none() && !in_configs {
                    return Err(ModelError::BadControlledDof {
                        node: *node,
                        dir: *dir,
                        detail: "has neither an end_value nor a prescribed configuration value"
                            .into(),
                    });
                }
                if end_value.is_none() && self.configurations.is_empty() {
                    return Err(ModelError::NoTargetConstraint);
                }
            }
            Regularization::EqualLength => {
                if self.configurations.is_empty() {
                    return Err(ModelError::NoTargetConstraint);
                }
            }
        }
        if self.configurations.is_empty()
            && !matches!(
                self.regularization,
                Regularization::ControlledDof {
                    end_value: Some(_),
                    ..
                }
            )
        {
            return Err(ModelError::NoTargetConstraint);
        }

        self.solver.validate().map_err(ModelError::Override)?;
        Ok(())
    }

    /// Apply command-line style overrides (refinement studies). Path node ids
    /// of stage configurations and continuity reductions are rescaled, which
    /// requires the new element count to preserve the breakpoints.
    pub fn with_overrides(
        &self,
        path_elements: Option<usize>,
        degree: Option<usize>,
        kind: Option<crate::pathspace::PathKind>,
        tol: Option<f64>,
        predictor: Option<PredictorSpec>,
    ) -> Result<MotionProblem, ModelError> {
        let mut p = self.clone();
        if let Some(n_new) = path_elements {
            let n_old = p.path.n_elements;
            let rescale = |b: usize| -> Result<usize, ModelError> {
                if !(b * n_new).is_multiple_of(n_old) {
                    return Err(ModelError::Override(format!(
                        "breakpoint {b}/{n_old} has no counterpart among {n_new} elements"
                    )));
                }
                Ok(b * n_new / n_old)
            };
            for c in &mut p.configurations {
                c.path_node = rescale(c.path_node)?;
            }
            p.path.continuity_reductions = p
                .path
                .continuity_reductions
                .iter()
                .map(|&b| rescale(b))
                .collect::<Result<_, _>>()?;
            p.path.n_elements = n_new;
        }
        if let Some(d) = degree {
            p.path.degree = d;
        }
        if let Some(k) = kind {
            p.path.kind = k;
        }
        if let Some(t) = tol {
            p.solver.tolerance = t;
        }
        if let Some(pr) = predictor {
            p.predictor = pr;
        }
        p.validate()?;
        Ok(p)
    }
}
