//! Polynomial spaces on cells and edges: bases, quadrature, mass matrices,
//! and the L² projections Q_0, Q_b, Q_n, Q_r.

pub mod basis;
pub mod project;
pub mod quadrature;

pub use basis::{cell_mass, dim_p, edge_mass, CellBasis, EdgeBasis, MassMatrix};
pub use project::{
    data_exactness, project_cell, project_cell_onto, project_edge, project_edge_with,
};
pub use quadrature::{
    cell_quadrature, edge_quadrature, gauss_legendre, triangle_rule, EdgeQuadrature,
    QuadratureRule, MAX_EXACTNESS,
};
