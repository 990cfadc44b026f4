//! Motion design for geometrically nonlinear structures.
//!
//! A quasi-static motion between prescribed configurations is treated as an
//! unknown curve in the space of all spatial degrees of freedom. The curve is
//! discretized with one-dimensional finite elements (Lagrange or B-spline) and
//! the accumulated internal strain energy, integrated along the deformation
//! path, is minimized by a monolithic Newton solve over every configuration at
//! once.
//!
//! The crate is organized along the pipeline:
//!
//! - [`model`]: structures, materials, configuration constraints and the
//!   problem file format,
//! - [`elements`]: spatial element library (truss, bilinear quad, EAS quad)
//!   under Green-Lagrange kinematics and a St. Venant-Kirchhoff material,
//! - [`pathspace`]: the 1-D discretization of the motion and the total arc
//!   length of the displacement field,
//! - [`functional`]: the path functional, its monolithic residual and tangent,
//! - [`solver`]: predictors and the constrained Newton solve,
//! - [`brachistochrone`]: exact and finite-element solutions of the
//!   Brachistochrone, used as the quantitative verification case,
//! - [`verify`]: the built-in verification suite.

pub mod benchmarks;
pub mod brachistochrone;
pub mod elements;
pub mod functional;
pub mod model;
pub mod pathspace;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use model::{
    ConfigurationConstraint, DofMap, Material, Mesh, MotionProblem, Node, Regularization,
};
pub use solver::{MotionSolution, SolverConfig};
