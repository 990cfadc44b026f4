//! Spatial element library.
//!
//! All elements use Green-Lagrange strain with a St. Venant-Kirchhoff material
//! (linear relation between Green-Lagrange strain and second Piola-Kirchhoff
//! stress), so large rotations carry no strain while strains themselves are
//! assumed small. Every element returns its internal energy together with the
//! exact first and second derivatives with respect to the element
//! displacements.

mod quad;
mod truss;

pub use quad::{eas_quad_state, eas_quad_state_with_params, quad_state, quad_volume, EasParameters};
pub use truss::truss_state;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{ElementKind, Mesh};

/// Energy, internal force and tangent stiffness of one spatial element at a
/// given displacement state.
#[derive(Debug, Clone)]
pub struct ElementState {
    /// Internal strain energy of the element.
    pub energy: f64,
    /// Exact gradient of the energy with respect to the element displacements.
    pub f_int: DVector<f64>,
    /// Exact Hessian of the energy (symmetric, includes geometric stiffness).
    pub k_t: DMatrix<f64>,
}

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("degenerate element: reference length is zero")]
    DegenerateTruss,
    #[error("inverted element: non-positive reference Jacobian (det J = {det:.3e})")]
    InvertedQuad { det: f64 },
    #[error("enhanced-strain condensation did not converge in {0} iterations")]
    CondensationDiverged(usize),
    #[error("material lacks {0}")]
    MissingMaterialParameter(&'static str),
}

/// Evaluate one mesh element at the given global displacement state.
///
/// `displacements` holds the full per-node displacement field (free and
/// supported entries alike, supported ones being zero), laid out node-major.
pub fn element_state(
    mesh: &Mesh,
    element: usize,
    displacements: &DVector<f64>,
) -> Result<ElementState, ElementError> {
    let ele = &mesh.elements[element];
    let mat = &mesh.materials[ele.material];
    let dim = mesh.dim();
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(ele.nodes.len());
    let mut d = Vec::with_capacity(ele.nodes.len() * dim);
    for &n in &ele.nodes {
        coords.push(mesh.nodes[n].x.clone());
        for i in 0..dim {
            d.push(displacements[n * dim + i]);
        }
    }
    let coord_refs: Vec<&[f64]> = coords.iter().map(|c| c.as_slice()).collect();
    match ele.kind {
        ElementKind::Truss2d | ElementKind::Truss3d => truss_state(&coord_refs, &d, mat),
        ElementKind::Quad4 => quad_state(&coord_refs, &d, mat),
        ElementKind::Quad4Eas => eas_quad_state(&coord_refs, &d, mat),
    }
}

/// Tributary volume of every node plus the total volume.
///
/// Truss bars contribute half of A*L to each end node, quads a quarter of
/// their volume to each corner. The sums satisfy `sum(v_k) == total`.
pub fn tributary_volume(mesh: &Mesh) -> (Vec<f64>, f64) {
    let mut v = vec![0.0; mesh.nodes.len()];
    for ele in &mesh.elements {
        let mat = &mesh.materials[ele.material];
        match ele.kind {
            ElementKind::Truss2d | ElementKind::Truss3d => {
                let a = mat.area.expect("validated truss material");
                let x1 = &mesh.nodes[ele.nodes[0]].x;
                let x2 = &mesh.nodes[ele.nodes[1]].x;
                let l: f64 = x1
                    .iter()
                    .zip(x2)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let half = 0.5 * a * l;
                v[ele.nodes[0]] += half;
                v[ele.nodes[1]] += half;
            }
            ElementKind::Quad4 | ElementKind::Quad4Eas => {
                let t = mat.thickness.expect("validated quad material");
                let coords: Vec<&[f64]> = ele
                    .nodes
                    .iter()
                    .map(|&n| mesh.nodes[n].x.as_slice())
                    .collect();
                let vol = t * quad_volume(&coords);
                for &n in &ele.nodes {
                    v[n] += 0.25 * vol;
                }
            }
        }
    }
    let total = v.iter().sum();
    (v, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Element, Material, Node};

    fn bar_mesh() -> Mesh {
        Mesh {
            nodes: vec![
                Node { id: 0, x: vec![0.0, 0.0] },
                Node { id: 1, x: vec![1.0, 0.0] },
            ],
            elements: vec![Element {
                kind: ElementKind::Truss2d,
                nodes: vec![0, 1],
                material: 0,
            }],
            materials: vec![Material::truss(30000.0, 0.1)],
            supports: vec![],
        }
    }

    #[test]
    fn single_bar_volume_splits_evenly() {
        let (v, total) = tributary_volume(&bar_mesh());
        assert!((v[0] - 0.05).abs() < 1e-15);
        assert!((v[1] - 0.05).abs() < 1e-15);
        assert!((total - 0.1).abs() < 1e-15);
    }

    #[test]
    fn collinear_bars_share_the_middle_node() {
        let mut mesh = bar_mesh();
        mesh.nodes.push(Node { id: 2, x: vec![2.0, 0.0] });
        mesh.elements.push(Element {
            kind: ElementKind::Truss2d,
            nodes: vec![1, 2],
            material: 0,
        });
        let (v, total) = tributary_volume(&mesh);
        assert!((v[0] - 0.05).abs() < 1e-15);
        assert!((v[1] - 0.1).abs() < 1e-15);
        assert!((v[2] - 0.05).abs() < 1e-15);
        assert!((total - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unit_square_quad_volume_quarters() {
        let mesh = Mesh {
            nodes: vec![
                Node { id: 0, x: vec![0.0, 0.0] },
                Node { id: 1, x: vec![1.0, 0.0] },
                Node { id: 2, x: vec![1.0, 1.0] },
                Node { id: 3, x: vec![0.0, 1.0] },
            ],
            elements: vec![Element {
                kind: ElementKind::Quad4,
                nodes: vec![0, 1, 2, 3],
                material: 0,
            }],
            materials: vec![Material::plane_stress(30000.0, 0.3, 1.0)],
            supports: vec![],
        };
        let (v, total) = tributary_volume(&mesh);
        for vk in &v {
            assert!((vk - 0.25).abs() < 1e-14);
        }
        assert!((total - 1.0).abs() < 1e-14);
    }
}
