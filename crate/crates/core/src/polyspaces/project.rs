//! L² projections onto cell and edge polynomial spaces (the operators Q_0,
//! Q_b, Q_n, Q_r of the discretization).

use nalgebra::DVector;

use crate::error::Result;
use crate::mesh::Point;
use crate::mesh::PolyMesh;
use crate::polyspaces::basis::{cell_mass, edge_mass, CellBasis, EdgeBasis};
use crate::polyspaces::quadrature::{cell_quadrature, edge_quadrature, CompensatedSum};

/// Default quadrature exactness for integrals involving non-polynomial
/// data: 2·degree plus a fixed smooth-data margin.
pub fn data_exactness(degree: usize) -> usize {
    2 * degree + 6
}

/// L² projection of `f` onto P_degree of the cell, in the coefficients of
/// `basis`. `exactness` controls the moment quadrature; the mass matrix is
/// always integrated exactly.
pub fn project_cell_onto<F: Fn(Point) -> f64>(
    mesh: &PolyMesh,
    cell: usize,
    basis: &CellBasis,
    f: F,
    exactness: usize,
) -> Result<DVector<f64>> {
    let degree = basis.degree;
    let mass = cell_mass(mesh, cell, basis, 2 * degree + 2)?;
    let rule = cell_quadrature(mesh, cell, exactness.max(2 * degree + 2))?;
    let mut moments = vec![CompensatedSum::default(); basis.dim()];
    for (&p, &w) in rule.points.iter().zip(&rule.weights) {
        let v = basis.values(p);
        let fw = w * f(p);
        for (m, &vi) in moments.iter_mut().zip(v.iter()) {
            m.add(fw * vi);
        }
    }
    mass.solve(&DVector::from_iterator(
        basis.dim(),
        moments.into_iter().map(CompensatedSum::value),
    ))
}

/// L² projection onto P_degree of the cell with the default basis policy
/// and smooth-data exactness.
pub fn project_cell<F: Fn(Point) -> f64>(
    mesh: &PolyMesh,
    cell: usize,
    degree: usize,
    f: F,
) -> Result<(CellBasis, DVector<f64>)> {
    let basis = CellBasis::for_cell(mesh, cell, degree)?;
    let coeffs = project_cell_onto(mesh, cell, &basis, f, data_exactness(degree))?;
    Ok((basis, coeffs))
}

/// L² projection of `f` onto P_degree of the edge (Legendre coefficients in
/// the edge parameter).
pub fn project_edge_with<F: Fn(Point) -> f64>(
    mesh: &PolyMesh,
    edge: usize,
    degree: usize,
    f: F,
    exactness: usize,
) -> Result<DVector<f64>> {
    let basis = EdgeBasis::new(degree);
    let mass = edge_mass(mesh, edge, basis, 2 * degree + 2)?;
    let rule = edge_quadrature(mesh, edge, exactness.max(2 * degree + 2))?;
    let mut moments = vec![CompensatedSum::default(); basis.dim()];
    for ((&p, &s), &w) in rule.points.iter().zip(&rule.params).zip(&rule.weights) {
        let v = basis.values(s);
        let fw = w * f(p);
        for (m, &vi) in moments.iter_mut().zip(v.iter()) {
            m.add(fw * vi);
        }
    }
    mass.solve(&DVector::from_iterator(
        basis.dim(),
        moments.into_iter().map(CompensatedSum::value),
    ))
}

/// [`project_edge_with`] at the default smooth-data exactness.
pub fn project_edge<F: Fn(Point) -> f64>(
    mesh: &PolyMesh,
    edge: usize,
    degree: usize,
    f: F,
) -> Result<DVector<f64>> {
    project_edge_with(mesh, edge, degree, f, data_exactness(degree))
}
