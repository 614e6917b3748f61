//! Global DOF management, assembly of (Δ_w u_h, Δ_w v) = (f, v₀), boundary
//! imposition through the edge projections, and the SPD solve.
//!
//! Global ordering: all cell interior blocks first (dim P_k each), then per
//! edge a trace block (p + 1) followed by a normal block (q + 1). Edge DOFs
//! are shared verbatim between the two incident cells; orientation signs σ
//! live inside the per-element weak-Laplacian matrices, never in the DOFs.
//!
//! Boundary conditions are imposed by elimination: constrained edge DOFs
//! are fixed to their projected values and their stiffness columns move to
//! the right-hand side, which keeps the reduced matrix SPD.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DVector;

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};
use crate::par;
use crate::polyspaces::project::{data_exactness, project_cell_onto, project_edge_with};
use crate::polyspaces::quadrature::cell_quadrature;
use crate::weak_laplacian::{build_local_weak_laplacian, LocalWeakLaplacian, WeakDofLayout};

/// Global index ranges for the weak finite element space on a mesh.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub layout: WeakDofLayout,
    pub n_cells: usize,
    pub n_edges: usize,
    /// Total DOF count: Σ cells dim P_k + Σ edges (p + 1 + q + 1).
    pub total: usize,
    /// Per-edge boundary flag; boundary edge DOFs are constrained.
    pub boundary_edge: Vec<bool>,
    free_index: Vec<Option<usize>>,
    pub global_of_free: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &PolyMesh, layout: WeakDofLayout) -> Self {
        let n_cells = mesh.cells.len();
        let n_edges = mesh.edges.len();
        let dim_k = layout.dim_k();
        let edge_block = layout.trace_block() + layout.normal_block();
        let total = n_cells * dim_k + n_edges * edge_block;
        let boundary_edge: Vec<bool> = mesh.edges.iter().map(|e| e.is_boundary()).collect();
        let mut free_index = vec![None; total];
        let mut global_of_free = Vec::new();
        let mut mark_free = |free_index: &mut Vec<Option<usize>>, g: usize| {
            free_index[g] = Some(global_of_free.len());
            global_of_free.push(g);
        };
        for g in 0..n_cells * dim_k {
            mark_free(&mut free_index, g);
        }
        for (e, &on_boundary) in boundary_edge.iter().enumerate() {
            if on_boundary {
                continue;
            }
            let base = n_cells * dim_k + e * edge_block;
            for g in base..base + edge_block {
                mark_free(&mut free_index, g);
            }
        }
        Self {
            layout,
            n_cells,
            n_edges,
            total,
            boundary_edge,
            free_index,
            global_of_free,
        }
    }

    pub fn dim_k(&self) -> usize {
        self.layout.dim_k()
    }

    pub fn free_count(&self) -> usize {
        self.global_of_free.len()
    }

    pub fn interior_offset(&self, cell: usize) -> usize {
        cell * self.dim_k()
    }

    fn edge_base(&self) -> usize {
        self.n_cells * self.dim_k()
    }

    pub fn trace_offset(&self, edge: usize) -> usize {
        self.edge_base() + edge * (self.layout.trace_block() + self.layout.normal_block())
    }

    pub fn normal_offset(&self, edge: usize) -> usize {
        self.trace_offset(edge) + self.layout.trace_block()
    }

    pub fn is_constrained(&self, global: usize) -> bool {
        self.free_index[global].is_none()
    }

    pub fn free_of_global(&self, global: usize) -> Option<usize> {
        self.free_index[global]
    }

    /// Global indices of a cell's local DOFs in kernel order (interior
    /// block, then per edge in loop order: trace block, normal block).
    pub fn cell_globals(&self, mesh: &PolyMesh, cell: usize) -> Vec<usize> {
        let layout = &self.layout;
        let mut idx = Vec::with_capacity(layout.local_dofs(mesh.cells[cell].n_edges()));
        let base = self.interior_offset(cell);
        idx.extend(base..base + self.dim_k());
        for &(e, _) in &mesh.cells[cell].edges {
            let t = self.trace_offset(e);
            idx.extend(t..t + layout.trace_block());
            let n = self.normal_offset(e);
            idx.extend(n..n + layout.normal_block());
        }
        idx
    }
}

/// Coefficients of a weak function over all global DOFs.
#[derive(Clone, Debug)]
pub struct WeakDofVector {
    pub values: Vec<f64>,
}

impl WeakDofVector {
    pub fn zeros(map: &DofMap) -> Self {
        Self {
            values: vec![0.0; map.total],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interior P_k coefficients of one cell.
    pub fn interior<'a>(&'a self, map: &DofMap, cell: usize) -> &'a [f64] {
        let base = map.interior_offset(cell);
        &self.values[base..base + map.dim_k()]
    }

    pub fn trace<'a>(&'a self, map: &DofMap, edge: usize) -> &'a [f64] {
        let base = map.trace_offset(edge);
        &self.values[base..base + map.layout.trace_block()]
    }

    pub fn normal<'a>(&'a self, map: &DofMap, edge: usize) -> &'a [f64] {
        let base = map.normal_offset(edge);
        &self.values[base..base + map.layout.normal_block()]
    }

    /// Gathers the local DOF vector of a cell in kernel order.
    pub fn local(&self, map: &DofMap, mesh: &PolyMesh, cell: usize) -> DVector<f64> {
        let idx = map.cell_globals(mesh, cell);
        DVector::from_iterator(idx.len(), idx.iter().map(|&g| self.values[g]))
    }

    /// Max |value| over boundary-edge DOFs (zero for members of V_h⁰).
    pub fn boundary_magnitude(&self, map: &DofMap) -> f64 {
        let mut m: f64 = 0.0;
        for e in 0..map.n_edges {
            if !map.boundary_edge[e] {
                continue;
            }
            for v in self.trace(map, e).iter().chain(self.normal(map, e)) {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Per-cell weak-Laplacian kernels, built once per (mesh, layout) and
/// shared by assembly and error evaluation.
pub struct ElementKernels {
    pub kernels: Vec<LocalWeakLaplacian>,
}

/// Builds every cell's weak-Laplacian kernel (element-parallel).
pub fn build_kernels(mesh: &PolyMesh, layout: &WeakDofLayout) -> Result<ElementKernels> {
    let results = par::map_indexed(mesh.cells.len(), |c| {
        build_local_weak_laplacian(mesh, c, layout)
    });
    let kernels = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ElementKernels { kernels })
}

/// Sequential twin of [`build_kernels`] for the benchmark comparison.
pub fn build_kernels_serial(mesh: &PolyMesh, layout: &WeakDofLayout) -> Result<ElementKernels> {
    let results = par::map_indexed_serial(mesh.cells.len(), |c| {
        build_local_weak_laplacian(mesh, c, layout)
    });
    let kernels = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ElementKernels { kernels })
}

/// Values of constrained (boundary) DOFs; zero at free positions.
#[derive(Clone, Debug)]
pub struct BoundaryValues {
    pub values: Vec<f64>,
}

impl BoundaryValues {
    pub fn homogeneous(map: &DofMap) -> Self {
        Self {
            values: vec![0.0; map.total],
        }
    }
}

/// Projects Dirichlet data ξ (trace) and ν (outward normal derivative)
/// onto the boundary edge spaces: u_b = Q_b ξ and u_n·(n_e·n) = Q_n ν,
/// so stored normal DOFs carry the σ of the boundary cell (+1 under the
/// mesh's outward convention).
pub fn impose_boundary<FXi, FNu>(
    mesh: &PolyMesh,
    map: &DofMap,
    xi: FXi,
    nu: FNu,
) -> Result<BoundaryValues>
where
    FXi: Fn(Point) -> f64,
    FNu: Fn(Point) -> f64,
{
    let layout = &map.layout;
    let mut values = vec![0.0; map.total];
    for &e in &mesh.boundary_edges {
        let cell = mesh.edges[e].cells.0;
        let sigma = mesh.edge_sign(cell, e)? as f64;
        let cb = project_edge_with(mesh, e, layout.p, &xi, data_exactness(layout.p))?;
        let cn = project_edge_with(mesh, e, layout.q, &nu, data_exactness(layout.q))?;
        let t = map.trace_offset(e);
        for (i, &v) in cb.iter().enumerate() {
            values[t + i] = v;
        }
        let n = map.normal_offset(e);
        for (i, &v) in cn.iter().enumerate() {
            values[n + i] = sigma * v;
        }
    }
    Ok(BoundaryValues { values })
}

/// Boundary values taken from a smooth field: ξ = u|_∂Ω and ν = ∇u·n with
/// n the outward normal of each boundary edge. Stored normal DOFs are
/// Q_q(∇u·n_e), exactly as in [`inject_qh`].
pub fn impose_boundary_from<U, G>(
    mesh: &PolyMesh,
    map: &DofMap,
    u: U,
    grad_u: G,
) -> Result<BoundaryValues>
where
    U: Fn(Point) -> f64,
    G: Fn(Point) -> (f64, f64),
{
    let layout = &map.layout;
    let mut values = vec![0.0; map.total];
    for &e in &mesh.boundary_edges {
        let n_e = mesh.edges[e].normal;
        let cb = project_edge_with(mesh, e, layout.p, &u, data_exactness(layout.p))?;
        let cn = project_edge_with(
            mesh,
            e,
            layout.q,
            |pt| {
                let (ux, uy) = grad_u(pt);
                ux * n_e.x + uy * n_e.y
            },
            data_exactness(layout.q),
        )?;
        let t = map.trace_offset(e);
        for (i, &v) in cb.iter().enumerate() {
            values[t + i] = v;
        }
        let n = map.normal_offset(e);
        for (i, &v) in cn.iter().enumerate() {
            values[n + i] = v;
        }
    }
    Ok(BoundaryValues { values })
}

/// Assembled system on the free DOFs, with constrained columns eliminated
/// into the right-hand side.
pub struct GlobalSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    pub constrained: BoundaryValues,
    pub map_total: usize,
    pub global_of_free: Vec<usize>,
}

impl GlobalSystem {
    pub fn free_count(&self) -> usize {
        self.rhs.len()
    }

    /// Dense copy of the free-DOF matrix (for small-system eigen checks).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.free_count();
        let dense = self.matrix.to_dense();
        nalgebra::DMatrix::from_fn(n, n, |i, j| dense[(i, j)])
    }
}

/// Assembles stiffness and load: A = Σ_T scatter(D_Tᵀ M_r D_T) on free
/// DOFs, b_i = (f, φ_i^{(k)})_T for interior DOFs, with constrained
/// columns moved to the right-hand side.
pub fn assemble<F>(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    f: F,
    bc: &BoundaryValues,
) -> Result<GlobalSystem>
where
    F: Fn(Point) -> f64 + Sync,
{
    let layout = &map.layout;
    let load_exactness = data_exactness(layout.k);
    // Element-parallel local work; deterministic serial scatter below.
    let locals = par::map_indexed(mesh.cells.len(), |c| -> Result<_> {
        let kernel = &kernels.kernels[c];
        let stiff = kernel.stiffness();
        let rule = cell_quadrature(mesh, c, load_exactness)?;
        let mut load = DVector::zeros(map.dim_k());
        for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
            let v = kernel.basis_k.values(pt);
            load.axpy(w * f(pt), &v, 1.0);
        }
        Ok((stiff, load))
    });

    let nfree = map.free_count();
    let mut rhs = vec![0.0; nfree];
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
    for (c, local) in locals.into_iter().enumerate() {
        let (stiff, load) = local?;
        let globals = map.cell_globals(mesh, c);
        for (i, &gi) in globals.iter().enumerate() {
            let Some(fi) = map.free_of_global(gi) else {
                continue;
            };
            if i < map.dim_k() {
                rhs[fi] += load[i];
            }
            for (j, &gj) in globals.iter().enumerate() {
                let v = stiff[(i, j)];
                match map.free_of_global(gj) {
                    Some(fj) => triplets.push(Triplet::new(fi, fj, v)),
                    None => rhs[fi] -= v * bc.values[gj],
                }
            }
        }
    }
    let matrix = SparseColMat::try_new_from_triplets(nfree, nfree, &triplets)
        .map_err(|e| WgError::NotPositiveDefinite(format!("assembly failed: {e:?}")))?;
    Ok(GlobalSystem {
        matrix,
        rhs,
        constrained: bc.clone(),
        map_total: map.total,
        global_of_free: map.global_of_free.clone(),
    })
}

fn merge_solution(system: &GlobalSystem, free: &[f64]) -> WeakDofVector {
    let mut values = system.constrained.values.clone();
    for (i, &g) in system.global_of_free.iter().enumerate() {
        values[g] = free[i];
    }
    WeakDofVector { values }
}

fn residual_check(system: &GlobalSystem, x: &Mat<f64>) -> Result<f64> {
    let n = system.free_count();
    let b = Mat::from_fn(n, 1, |i, _| system.rhs[i]);
    let r = &system.matrix * x - &b;
    let rnorm = r.norm_l2();
    let bnorm = b.norm_l2();
    let ok = if bnorm > 0.0 {
        rnorm / bnorm <= 1e-11
    } else {
        rnorm <= 1e-13
    };
    if !ok {
        return Err(WgError::NoConvergence {
            residual: if bnorm > 0.0 { rnorm / bnorm } else { rnorm },
            iterations: 0,
        });
    }
    Ok(rnorm)
}

/// Direct sparse SPD solve (Cholesky); fails with NotPositiveDefinite when
/// the factorization breaks down, which signals an assembly or BC bug.
pub fn solve(system: &GlobalSystem) -> Result<WeakDofVector> {
    let n = system.free_count();
    let llt = system
        .matrix
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| WgError::NotPositiveDefinite(format!("{e:?}")))?;
    let b = Mat::from_fn(n, 1, |i, _| system.rhs[i]);
    let x = llt.solve(&b);
    residual_check(system, &x)?;
    let free: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    Ok(merge_solution(system, &free))
}

/// Conjugate gradients with diagonal (Jacobi) preconditioning; `tol` is an
/// absolute bound on the residual norm.
pub fn solve_cg(system: &GlobalSystem, tol: f64, max_iter: usize) -> Result<WeakDofVector> {
    let n = system.free_count();
    let a = &system.matrix;
    let dense_diag: Vec<f64> = {
        let mut d = vec![0.0; n];
        let dm = a.to_dense();
        for (i, di) in d.iter_mut().enumerate() {
            *di = dm[(i, i)];
        }
        d
    };
    if dense_diag.iter().any(|&d| d <= 0.0) {
        return Err(WgError::NotPositiveDefinite(
            "nonpositive diagonal entry".to_string(),
        ));
    }
    let b = Mat::from_fn(n, 1, |i, _| system.rhs[i]);
    let mut x = Mat::<f64>::zeros(n, 1);
    let mut r = b.clone();
    let mut z = Mat::from_fn(n, 1, |i, _| r[(i, 0)] / dense_diag[i]);
    let mut p = z.clone();
    let mut rz: f64 = (0..n).map(|i| r[(i, 0)] * z[(i, 0)]).sum();
    let mut rnorm = r.norm_l2();
    let mut iterations = 0;
    while rnorm > tol && iterations < max_iter {
        let ap = a * &p;
        let pap: f64 = (0..n).map(|i| p[(i, 0)] * ap[(i, 0)]).sum();
        if pap <= 0.0 {
            return Err(WgError::NotPositiveDefinite(format!(
                "p'Ap = {pap:.3e} in CG"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[(i, 0)] += alpha * p[(i, 0)];
            r[(i, 0)] -= alpha * ap[(i, 0)];
        }
        z = Mat::from_fn(n, 1, |i, _| r[(i, 0)] / dense_diag[i]);
        let rz_new: f64 = (0..n).map(|i| r[(i, 0)] * z[(i, 0)]).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[(i, 0)] = z[(i, 0)] + beta * p[(i, 0)];
        }
        rnorm = r.norm_l2();
        iterations += 1;
    }
    if rnorm > tol {
        return Err(WgError::NoConvergence {
            residual: rnorm,
            iterations,
        });
    }
    let free: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    Ok(merge_solution(system, &free))
}

/// L² projection Q_h of a smooth field into the weak space: per-cell Q_0 u,
/// per-edge Q_b(u|_e) and Q_n(∇u·n_e).
pub fn inject_qh<U, G>(mesh: &PolyMesh, map: &DofMap, u: U, grad_u: G) -> Result<WeakDofVector>
where
    U: Fn(Point) -> f64 + Sync,
    G: Fn(Point) -> (f64, f64) + Sync,
{
    let layout = &map.layout;
    let mut out = WeakDofVector::zeros(map);
    let interiors = par::map_indexed(mesh.cells.len(), |c| -> Result<_> {
        let basis = crate::polyspaces::CellBasis::for_cell(mesh, c, layout.k)?;
        project_cell_onto(mesh, c, &basis, &u, data_exactness(layout.k))
    });
    for (c, coeffs) in interiors.into_iter().enumerate() {
        let coeffs = coeffs?;
        let base = map.interior_offset(c);
        out.values[base..base + map.dim_k()].copy_from_slice(coeffs.as_slice());
    }
    let edges = par::map_indexed(mesh.edges.len(), |e| -> Result<_> {
        let n_e = mesh.edges[e].normal;
        let cb = project_edge_with(mesh, e, layout.p, &u, data_exactness(layout.p))?;
        let cn = project_edge_with(
            mesh,
            e,
            layout.q,
            |pt| {
                let (ux, uy) = grad_u(pt);
                ux * n_e.x + uy * n_e.y
            },
            data_exactness(layout.q),
        )?;
        Ok((cb, cn))
    });
    for (e, pair) in edges.into_iter().enumerate() {
        let (cb, cn) = pair?;
        let t = map.trace_offset(e);
        out.values[t..t + layout.trace_block()].copy_from_slice(cb.as_slice());
        let n = map.normal_offset(e);
        out.values[n..n + layout.normal_block()].copy_from_slice(cn.as_slice());
    }
    Ok(out)
}
