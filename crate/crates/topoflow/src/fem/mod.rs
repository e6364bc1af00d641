//! Taylor-Hood (P2 velocity / P1 pressure) and P1 scalar finite element
//! spaces on triangular meshes: quadrature, shape functions, fields, boundary
//! data and operator assembly.

pub mod assembly;
pub mod basis;
pub mod boundary;
pub mod field;
pub mod quadrature;

pub use boundary::{
    interpolate_boundary, profile_eval, BoundaryProfile, DirichletData, DirichletTrace, FemError,
};
pub use field::{n_p2_nodes, p2_elem_nodes, p2_node_coord, ScalarFieldP1, VectorFieldP2};
