//! The discrete weak Laplacian Δ_{w,r,T}.
//!
//! For a weak function v = {v₀, v_b, v_n n_e} on a cell T, Δ_w v is the
//! P_r(T) polynomial defined by testing against every φ ∈ P_r(T):
//!
//!   (Δ_w v, φ)_T = (v₀, Δφ)_T − ⟨v_b, ∇φ·n⟩_∂T + ⟨v_n n_e·n, φ⟩_∂T,
//!
//! where n is the outward normal of T and n_e·n = σ = ±1 is the cell's
//! sign for the edge. [`LocalWeakLaplacian`] realizes this as a matrix from
//! local weak DOFs to P_r coefficients; all edge terms carry σ explicitly
//! so a single orientation convention covers both n and n_e.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};
use crate::polyspaces::basis::{cell_mass, CellBasis, EdgeBasis, MassMatrix};
use crate::polyspaces::quadrature::{cell_quadrature, edge_quadrature, CompensatedSum};

/// How the weak-Laplacian degree r is chosen per cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RMode {
    /// r = 2N + k − 2: valid on any simple polygon (the default).
    Nonconvex,
    /// r = N + k − 2: sufficient when every cell is convex.
    Convex,
    /// Fixed user degree; must satisfy r ≥ k − 2.
    Custom(usize),
}

/// Degree r for a cell with `n_edges` edges and interior degree `k`.
pub fn choose_r(n_edges: usize, k: usize, mode: RMode) -> Result<usize> {
    debug_assert!(n_edges >= 3 && k >= 2);
    match mode {
        RMode::Nonconvex => Ok(2 * n_edges + k - 2),
        RMode::Convex => Ok(n_edges + k - 2),
        RMode::Custom(r) => {
            if r + 2 < k {
                Err(WgError::InvalidR { r, min: k - 2 })
            } else {
                Ok(r)
            }
        }
    }
}

/// Degrees of the weak finite element space V(k, p, q, T) plus the r-mode.
#[derive(Clone, Copy, Debug)]
pub struct WeakDofLayout {
    /// Interior polynomial degree (k ≥ 2).
    pub k: usize,
    /// Edge trace degree (k ≥ p ≥ q).
    pub p: usize,
    /// Edge normal-derivative degree (q ≥ 1).
    pub q: usize,
    pub r_mode: RMode,
}

impl WeakDofLayout {
    pub fn new(k: usize, p: usize, q: usize, r_mode: RMode) -> Result<Self> {
        if k < 2 {
            return Err(WgError::InvalidConfig(format!("k = {k} must be >= 2")));
        }
        if q < 1 || p < q || k < p {
            return Err(WgError::InvalidConfig(format!(
                "degrees must satisfy k >= p >= q >= 1, got k = {k}, p = {p}, q = {q}"
            )));
        }
        if let RMode::Custom(r) = r_mode {
            if r + 2 < k {
                return Err(WgError::InvalidR { r, min: k - 2 });
            }
        }
        Ok(Self { k, p, q, r_mode })
    }

    /// Defaults p = k, q = k − 1.
    pub fn with_defaults(k: usize, r_mode: RMode) -> Result<Self> {
        Self::new(k, k, k.saturating_sub(1).max(1), r_mode)
    }

    pub fn dim_k(&self) -> usize {
        crate::polyspaces::dim_p(self.k)
    }

    pub fn trace_block(&self) -> usize {
        self.p + 1
    }

    pub fn normal_block(&self) -> usize {
        self.q + 1
    }

    pub fn r_for(&self, n_edges: usize) -> usize {
        choose_r(n_edges, self.k, self.r_mode).expect("layout validated at construction")
    }

    /// Local weak DOF count on a cell with `n_edges` edges: the interior
    /// block then, per edge in loop order, a trace block and a normal
    /// block.
    pub fn local_dofs(&self, n_edges: usize) -> usize {
        self.dim_k() + n_edges * (self.trace_block() + self.normal_block())
    }
}

/// Per-element weak Laplacian: maps local weak DOFs (interior block, then
/// per-edge trace and normal blocks in loop order) to P_r coefficients.
#[derive(Clone, Debug)]
pub struct LocalWeakLaplacian {
    /// dim P_r × local DOF count.
    pub matrix: DMatrix<f64>,
    /// The P_r Gram matrix used to build the map (and to take L² norms of
    /// weak Laplacians).
    pub mass_r: MassMatrix,
    pub basis_r: CellBasis,
    pub basis_k: CellBasis,
    pub r: usize,
}

impl LocalWeakLaplacian {
    /// Δ_w applied to a local weak DOF vector, as P_r coefficients.
    pub fn apply(&self, local: &DVector<f64>) -> DVector<f64> {
        &self.matrix * local
    }

    /// ‖Δ_w v‖²_T for a local weak DOF vector.
    pub fn energy_sq(&self, local: &DVector<f64>) -> f64 {
        let c = self.apply(local);
        self.mass_r.quadratic_form(&c)
    }

    /// Local stiffness K_T = D_Tᵀ M_r D_T of the form (Δ_w u, Δ_w v)_T.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let md = &self.mass_r.matrix * &self.matrix;
        self.matrix.transpose() * md
    }
}

/// Builds the weak-Laplacian map for one cell.
pub fn build_local_weak_laplacian(
    mesh: &PolyMesh,
    cell: usize,
    layout: &WeakDofLayout,
) -> Result<LocalWeakLaplacian> {
    let n_edges = mesh.cells[cell].n_edges();
    let r = layout.r_for(n_edges);
    let basis_r = CellBasis::for_cell(mesh, cell, r)?;
    let basis_k = CellBasis::for_cell(mesh, cell, layout.k)?;
    let dim_r = basis_r.dim();
    let exactness = 2 * r + 2;
    let mass_r = cell_mass(mesh, cell, &basis_r, exactness)?;

    let mut rhs = DMatrix::zeros(dim_r, layout.local_dofs(n_edges));

    // Interior block: (φ_j^{(k)}, Δφ_i^{(r)})_T.
    let rule = cell_quadrature(mesh, cell, exactness)?;
    for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
        let lap_r = basis_r.laplacians(pt);
        let val_k = basis_k.values(pt);
        for i in 0..dim_r {
            let wi = w * lap_r[i];
            for j in 0..basis_k.dim() {
                rhs[(i, j)] += wi * val_k[j];
            }
        }
    }

    // Edge blocks in loop order: −⟨ψ_j, ∇φ_i·n⟩_e then ⟨σ χ_j, φ_i⟩_e.
    let trace_basis = EdgeBasis::new(layout.p);
    let normal_basis = EdgeBasis::new(layout.q);
    let mut col0 = basis_k.dim();
    for &(e, sign) in &mesh.cells[cell].edges {
        let sigma = sign as f64;
        let erule = edge_quadrature(mesh, e, exactness)?;
        let n_e = mesh.edges[e].normal;
        for ((&pt, &s), &w) in erule.points.iter().zip(&erule.params).zip(&erule.weights) {
            let (gx, gy) = basis_r.gradients(pt);
            let val_r = basis_r.values(pt);
            let psi = trace_basis.values(s);
            let chi = normal_basis.values(s);
            for i in 0..dim_r {
                // n = σ n_e is the outward normal of this cell.
                let grad_n = sigma * (gx[i] * n_e.x + gy[i] * n_e.y);
                for j in 0..trace_basis.dim() {
                    rhs[(i, col0 + j)] -= w * psi[j] * grad_n;
                }
                let base = col0 + trace_basis.dim();
                for j in 0..normal_basis.dim() {
                    rhs[(i, base + j)] += w * sigma * chi[j] * val_r[i];
                }
            }
        }
        col0 += trace_basis.dim() + normal_basis.dim();
    }

    let matrix = mass_r.solve_matrix(&rhs)?;
    Ok(LocalWeakLaplacian {
        matrix,
        mass_r,
        basis_r,
        basis_k,
        r,
    })
}

/// Δ_w of the exact weak function {u|_T, u|_∂T, (∇u·n_e)|_∂T n_e} of a
/// smooth field, computed from traces by quadrature (no DOF projection).
/// Returns P_r coefficients in the same basis convention as
/// [`build_local_weak_laplacian`].
///
/// With exact traces the ⟨u, ∇φ·n⟩ boundary term of the defining moments
/// cancels against part of (u, Δφ)_T by the divergence theorem, so the
/// moments are accumulated in the algebraically identical gradient form
///   (Δ_w u, φ)_T = −(∇u, ∇φ)_T + ⟨∇u·n, φ⟩_∂T.
/// The direct form loses two digits to that cancellation at r = 11 (the
/// intermediates scale like ‖Δφ‖ instead of ‖∇φ‖), which would break the
/// 1e-11 commuting-identity contract on chevron cells; this route still
/// never touches Δu, so it stays independent of the Q_r(Δu) path it is
/// checked against.
pub fn weak_laplacian_of_exact<U, G>(
    mesh: &PolyMesh,
    cell: usize,
    r: usize,
    u: U,
    grad_u: G,
    exactness: usize,
) -> Result<DVector<f64>>
where
    U: Fn(Point) -> f64,
    G: Fn(Point) -> (f64, f64),
{
    let _ = u; // value traces cancel analytically; see the doc comment
    let basis_r = CellBasis::for_cell(mesh, cell, r)?;
    let dim_r = basis_r.dim();
    let mass_exactness = 2 * r + 2;
    let mass_r = cell_mass(mesh, cell, &basis_r, mass_exactness)?;
    // The two contributions still cancel down to (Δu, φ)_T; compensated
    // accumulation keeps the remaining digits.
    let mut moments = vec![CompensatedSum::default(); dim_r];

    let rule = cell_quadrature(mesh, cell, exactness.max(mass_exactness))?;
    for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
        let (gx, gy) = basis_r.gradients(pt);
        let (ux, uy) = grad_u(pt);
        for i in 0..dim_r {
            moments[i].add(-w * (ux * gx[i] + uy * gy[i]));
        }
    }
    for &(e, sign) in &mesh.cells[cell].edges {
        let sigma = sign as f64;
        let erule = edge_quadrature(mesh, e, exactness.max(mass_exactness))?;
        let n_e = mesh.edges[e].normal;
        for (&pt, &w) in erule.points.iter().zip(&erule.weights) {
            let val_r = basis_r.values(pt);
            let (ux, uy) = grad_u(pt);
            // v_n n_e·n = (∇u·n_e)σ = ∇u·n with n = σ n_e outward.
            let du_dn = sigma * (ux * n_e.x + uy * n_e.y);
            for i in 0..dim_r {
                moments[i].add(w * du_dn * val_r[i]);
            }
        }
    }
    mass_r.solve(&DVector::from_iterator(
        dim_r,
        moments.into_iter().map(CompensatedSum::value),
    ))
}

/// Same operator through the defining moment formula
/// (u, Δφ)_T − ⟨u, ∇φ·n⟩_∂T + ⟨∇u·n, φ⟩_∂T, kept as a cross-check of the
/// gradient form. Expect roughly two digits less accuracy at large r from
/// the ‖Δφ‖-scale cancellation.
pub fn weak_laplacian_of_exact_direct<U, G>(
    mesh: &PolyMesh,
    cell: usize,
    r: usize,
    u: U,
    grad_u: G,
    exactness: usize,
) -> Result<DVector<f64>>
where
    U: Fn(Point) -> f64,
    G: Fn(Point) -> (f64, f64),
{
    let basis_r = CellBasis::for_cell(mesh, cell, r)?;
    let dim_r = basis_r.dim();
    let mass_exactness = 2 * r + 2;
    let mass_r = cell_mass(mesh, cell, &basis_r, mass_exactness)?;
    let mut moments = vec![CompensatedSum::default(); dim_r];

    let rule = cell_quadrature(mesh, cell, exactness.max(mass_exactness))?;
    for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
        let lap_r = basis_r.laplacians(pt);
        let uw = w * u(pt);
        for (m, &li) in moments.iter_mut().zip(lap_r.iter()) {
            m.add(uw * li);
        }
    }
    for &(e, sign) in &mesh.cells[cell].edges {
        let sigma = sign as f64;
        let erule = edge_quadrature(mesh, e, exactness.max(mass_exactness))?;
        let n_e = mesh.edges[e].normal;
        for (&pt, &w) in erule.points.iter().zip(&erule.weights) {
            let (gx, gy) = basis_r.gradients(pt);
            let val_r = basis_r.values(pt);
            let uv = u(pt);
            let (ux, uy) = grad_u(pt);
            let du_dn = sigma * (ux * n_e.x + uy * n_e.y);
            for i in 0..dim_r {
                let grad_n = sigma * (gx[i] * n_e.x + gy[i] * n_e.y);
                moments[i].add(w * (du_dn * val_r[i] - uv * grad_n));
            }
        }
    }
    mass_r.solve(&DVector::from_iterator(
        dim_r,
        moments.into_iter().map(CompensatedSum::value),
    ))
}
