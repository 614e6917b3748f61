//! Error norms, manufactured solutions, and numeric verification of the
//! analysis machinery (error-equation functional, norm equivalence, bubble
//! functions).
//!
//! The energy error uses the commuting identity Δ_w u = Q_r(Δu): per cell,
//! |||u − u_h|||² accumulates ‖Q_r(Δu) − Δ_w u_h‖²_T, so the exact solution
//! never needs weak DOFs of its own.

use nalgebra::DVector;

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};
use crate::par;
use crate::polyspaces::basis::EdgeBasis;
use crate::polyspaces::project::{data_exactness, project_cell_onto, project_edge_with};
use crate::polyspaces::quadrature::{cell_quadrature, edge_quadrature};
use crate::rng::SplitMix64;
use crate::solver::{DofMap, ElementKernels, WeakDofVector};
use crate::weak_laplacian::LocalWeakLaplacian;

type Scalar = Box<dyn Fn(Point) -> f64 + Send + Sync>;
type Gradient = Box<dyn Fn(Point) -> (f64, f64) + Send + Sync>;

/// A closed-form solution with everything the harness needs: u, ∇u, Δu,
/// ∇Δu, and the load f = Δ²u. Boundary data are ξ = u and ν = ∇u·n.
pub struct ManufacturedSolution {
    pub name: &'static str,
    pub u: Scalar,
    pub grad_u: Gradient,
    pub laplace_u: Scalar,
    pub grad_laplace_u: Gradient,
    pub f: Scalar,
    /// Highest Sobolev order guaranteed; `None` for C^∞ data.
    pub sobolev_order: Option<usize>,
}

impl ManufacturedSolution {
    /// Finite-difference consistency check: max over `points` of the
    /// 13-point biharmonic stencil against f, scaled by max(1, max|f|)
    /// over the sample.
    pub fn fd_residual(&self, points: &[Point], h: f64) -> f64 {
        let scale = points
            .iter()
            .map(|&p| (self.f)(p).abs())
            .fold(1.0, f64::max);
        let mut worst: f64 = 0.0;
        for &p in points {
            let u = |dx: f64, dy: f64| (self.u)(Point::new(p.x + dx * h, p.y + dy * h));
            let lap2 = (20.0 * u(0.0, 0.0)
                - 8.0 * (u(1.0, 0.0) + u(-1.0, 0.0) + u(0.0, 1.0) + u(0.0, -1.0))
                + 2.0 * (u(1.0, 1.0) + u(1.0, -1.0) + u(-1.0, 1.0) + u(-1.0, -1.0))
                + (u(2.0, 0.0) + u(-2.0, 0.0) + u(0.0, 2.0) + u(0.0, -2.0)))
                / (h * h * h * h);
            let f = (self.f)(p);
            worst = worst.max((lap2 - f).abs() / scale);
        }
        worst
    }
}

/// u = sin(πx)sin(πy): ξ ≡ 0 on the unit square, ν nonzero, f = 4π⁴u.
pub fn manufactured_trig() -> ManufacturedSolution {
    use std::f64::consts::PI;
    let u = |p: Point| (PI * p.x).sin() * (PI * p.y).sin();
    ManufacturedSolution {
        name: "trig",
        u: Box::new(u),
        grad_u: Box::new(move |p| {
            (
                PI * (PI * p.x).cos() * (PI * p.y).sin(),
                PI * (PI * p.x).sin() * (PI * p.y).cos(),
            )
        }),
        laplace_u: Box::new(move |p| -2.0 * PI * PI * u(p)),
        grad_laplace_u: Box::new(move |p| {
            let c = -2.0 * PI * PI;
            (
                c * PI * (PI * p.x).cos() * (PI * p.y).sin(),
                c * PI * (PI * p.x).sin() * (PI * p.y).cos(),
            )
        }),
        f: Box::new(move |p| 4.0 * PI.powi(4) * u(p)),
        sobolev_order: None,
    }
}

/// u = x^k + y^k: a global P_k solution with exact data (f ≡ 0 for k ≤ 3).
pub fn manufactured_poly(k: usize) -> ManufacturedSolution {
    assert!(k >= 2);
    let kf = k as f64;
    let ki = k as i32;
    let fall = |n: usize, j: usize| -> f64 {
        // falling factorial n(n-1)...(n-j+1) as f64, 0 when n < j
        if n < j {
            return 0.0;
        }
        (0..j).map(|i| (n - i) as f64).product()
    };
    let c2 = fall(k, 2);
    let c3 = fall(k, 3);
    let c4 = fall(k, 4);
    ManufacturedSolution {
        name: "poly",
        u: Box::new(move |p| p.x.powi(ki) + p.y.powi(ki)),
        grad_u: Box::new(move |p| (kf * p.x.powi(ki - 1), kf * p.y.powi(ki - 1))),
        laplace_u: Box::new(move |p| c2 * (p.x.powi(ki - 2) + p.y.powi(ki - 2))),
        grad_laplace_u: Box::new(move |p| {
            if k < 3 {
                (0.0, 0.0)
            } else {
                (c3 * p.x.powi(ki - 3), c3 * p.y.powi(ki - 3))
            }
        }),
        f: Box::new(move |p| {
            if k < 4 {
                0.0
            } else {
                c4 * (p.x.powi(ki - 4) + p.y.powi(ki - 4))
            }
        }),
        sobolev_order: None,
    }
}

// ---------------------------------------------------------------------------
// norms and errors

/// Energy norm |||v||| = (Σ_T ‖Δ_w v‖²_T)^{1/2} of a discrete weak function.
pub fn energy_norm(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    v: &WeakDofVector,
) -> f64 {
    par::sum_indexed(mesh.cells.len(), |c| {
        kernels.kernels[c].energy_sq(&v.local(map, mesh, c))
    })
    .sqrt()
}

/// Energy error |||u − u_h||| via the commuting identity:
/// Σ_T ‖Q_r(Δu) − Δ_w u_h‖²_T.
pub fn energy_error(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    sol: &ManufacturedSolution,
    u_h: &WeakDofVector,
) -> f64 {
    par::sum_indexed(mesh.cells.len(), |c| {
        let kernel = &kernels.kernels[c];
        let q_r = project_cell_onto(
            mesh,
            c,
            &kernel.basis_r,
            |p| (sol.laplace_u)(p),
            data_exactness(kernel.r),
        )
        .expect("projection of smooth data");
        let diff = q_r - kernel.apply(&u_h.local(map, mesh, c));
        kernel.mass_r.quadratic_form(&diff)
    })
    .sqrt()
}

/// Per-cell contribution to the squared discrete H² norm:
/// ‖Δv₀‖²_T + h_T⁻³‖v₀−v_b‖²_∂T + h_T⁻¹‖(∇v₀−v_n n_e)·n‖²_∂T.
pub fn local_h2_sq(
    mesh: &PolyMesh,
    cell: usize,
    kernel: &LocalWeakLaplacian,
    map: &DofMap,
    local: &DVector<f64>,
) -> f64 {
    let layout = &map.layout;
    let basis_k = &kernel.basis_k;
    let dim_k = basis_k.dim();
    let v0 = local.rows(0, dim_k).clone_owned();
    let h_t = mesh.cells[cell].h;

    let rule = cell_quadrature(mesh, cell, 2 * layout.k + 2).expect("cell rule");
    let mut acc = 0.0;
    for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
        let lap = basis_k.laplacians(pt);
        let val = v0.dot(&lap);
        acc += w * val * val;
    }

    let trace_basis = EdgeBasis::new(layout.p);
    let normal_basis = EdgeBasis::new(layout.q);
    let e_exact = 2 * layout.k.max(layout.p) + 2;
    let mut off = dim_k;
    for &(e, sign) in &mesh.cells[cell].edges {
        let sigma = sign as f64;
        let _ = sigma; // σ² = 1 in both jump terms below.
        let erule = edge_quadrature(mesh, e, e_exact).expect("edge rule");
        let n_e = mesh.edges[e].normal;
        let vb = local.rows(off, layout.trace_block()).clone_owned();
        let vn = local
            .rows(off + layout.trace_block(), layout.normal_block())
            .clone_owned();
        let mut jump0 = 0.0;
        let mut jump1 = 0.0;
        for ((&pt, &s), &w) in erule.points.iter().zip(&erule.params).zip(&erule.weights) {
            let v0_val = v0.dot(&basis_k.values(pt));
            let vb_val = vb.dot(&trace_basis.values(s));
            let (gx, gy) = basis_k.gradients(pt);
            let dv0_dne = v0.dot(&gx) * n_e.x + v0.dot(&gy) * n_e.y;
            let vn_val = vn.dot(&normal_basis.values(s));
            // (∇v₀ − v_n n_e)·n = σ(∇v₀·n_e − v_n); σ² = 1 when squared.
            jump0 += w * (v0_val - vb_val) * (v0_val - vb_val);
            jump1 += w * (dv0_dne - vn_val) * (dv0_dne - vn_val);
        }
        acc += jump0 / (h_t * h_t * h_t) + jump1 / h_t;
        off += layout.trace_block() + layout.normal_block();
    }
    acc
}

/// Discrete H² semi-norm ‖v‖_{2,h}.
pub fn discrete_h2_norm(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    v: &WeakDofVector,
) -> f64 {
    par::sum_indexed(mesh.cells.len(), |c| {
        local_h2_sq(mesh, c, &kernels.kernels[c], map, &v.local(map, mesh, c))
    })
    .sqrt()
}

/// L² error ‖u − u₀‖ of the interior component against the exact solution.
pub fn l2_error(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    sol: &ManufacturedSolution,
    u_h: &WeakDofVector,
) -> f64 {
    let k = map.layout.k;
    par::sum_indexed(mesh.cells.len(), |c| {
        let basis_k = &kernels.kernels[c].basis_k;
        let coeffs = DVector::from_column_slice(u_h.interior(map, c));
        let rule = cell_quadrature(mesh, c, data_exactness(k)).expect("cell rule");
        let mut acc = 0.0;
        for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
            let d = (sol.u)(pt) - coeffs.dot(&basis_k.values(pt));
            acc += w * d * d;
        }
        acc
    })
    .sqrt()
}

/// The error-equation functional
/// ℓ(u,v) = Σ_T −⟨v_b−v₀, ∇((Q_r−I)Δu)·n⟩_∂T + ⟨v_n n_e·n − ∇v₀·n, (Q_r−I)Δu⟩_∂T
/// for v ∈ V_h⁰; satisfies (Δ_w e_h, Δ_w v) = ℓ(u, v).
pub fn residual_functional_ell(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    sol: &ManufacturedSolution,
    v: &WeakDofVector,
) -> Result<f64> {
    let scale = v.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bmag = v.boundary_magnitude(map);
    if bmag > 1e-12 * scale.max(1.0) {
        return Err(WgError::BoundaryNotZero(bmag));
    }
    let layout = &map.layout;
    let trace_basis = EdgeBasis::new(layout.p);
    let normal_basis = EdgeBasis::new(layout.q);
    let terms = par::map_indexed(mesh.cells.len(), |c| -> f64 {
        let kernel = &kernels.kernels[c];
        let basis_r = &kernel.basis_r;
        let basis_k = &kernel.basis_k;
        let q_r = project_cell_onto(
            mesh,
            c,
            basis_r,
            |p| (sol.laplace_u)(p),
            data_exactness(kernel.r),
        )
        .expect("projection of smooth data");
        let local = v.local(map, mesh, c);
        let dim_k = basis_k.dim();
        let v0 = local.rows(0, dim_k).clone_owned();
        let mut acc = 0.0;
        let mut off = dim_k;
        for &(e, sign) in &mesh.cells[c].edges {
            let sigma = sign as f64;
            let erule = edge_quadrature(mesh, e, data_exactness(kernel.r)).expect("edge rule");
            let n_e = mesh.edges[e].normal;
            let vb = local.rows(off, layout.trace_block()).clone_owned();
            let vn = local
                .rows(off + layout.trace_block(), layout.normal_block())
                .clone_owned();
            for ((&pt, &s), &w) in erule.points.iter().zip(&erule.params).zip(&erule.weights) {
                // g = (Q_r − I)Δu and its normal derivative along n = σ n_e.
                let g = basis_r.eval(&q_r, pt) - (sol.laplace_u)(pt);
                let (qx, qy) = basis_r.eval_gradient(&q_r, pt);
                let (lx, ly) = (sol.grad_laplace_u)(pt);
                let dg_dn = sigma * ((qx - lx) * n_e.x + (qy - ly) * n_e.y);
                let v0_val = v0.dot(&basis_k.values(pt));
                let vb_val = vb.dot(&trace_basis.values(s));
                let (gx, gy) = basis_k.gradients(pt);
                let dv0_dn = sigma * (v0.dot(&gx) * n_e.x + v0.dot(&gy) * n_e.y);
                let vn_dot_n = sigma * vn.dot(&normal_basis.values(s));
                acc += w * (-(vb_val - v0_val) * dg_dn + (vn_dot_n - dv0_dn) * g);
            }
            off += layout.trace_block() + layout.normal_block();
        }
        acc
    });
    Ok(terms.into_iter().sum())
}

/// (Δ_w e_h, Δ_w v) with e_h = u − u_h, using Δ_w u = Q_r(Δu) per cell.
pub fn error_energy_product(
    mesh: &PolyMesh,
    map: &DofMap,
    kernels: &ElementKernels,
    sol: &ManufacturedSolution,
    u_h: &WeakDofVector,
    v: &WeakDofVector,
) -> f64 {
    par::sum_indexed(mesh.cells.len(), |c| {
        let kernel = &kernels.kernels[c];
        let q_r = project_cell_onto(
            mesh,
            c,
            &kernel.basis_r,
            |p| (sol.laplace_u)(p),
            data_exactness(kernel.r),
        )
        .expect("projection of smooth data");
        let e_c = q_r - kernel.apply(&u_h.local(map, mesh, c));
        let v_c = kernel.apply(&v.local(map, mesh, c));
        e_c.dot(&(&kernel.mass_r.matrix * &v_c))
    })
}

// ---------------------------------------------------------------------------
// norm equivalence sweeps

/// Local weak DOFs of the consistent affine functions {1, ξ, η} on a cell
/// (v₀ affine, v_b its trace, v_n its normal derivative): the shared kernel
/// of both local norms.
pub fn consistent_affine_dofs(
    mesh: &PolyMesh,
    cell: usize,
    kernel: &LocalWeakLaplacian,
    map: &DofMap,
) -> Result<Vec<DVector<f64>>> {
    let layout = &map.layout;
    let basis_k = &kernel.basis_k;
    let c0 = basis_k.center;
    let h = basis_k.scale;
    let fields: [(Scalar, Gradient); 3] = [
        (Box::new(|_| 1.0), Box::new(|_| (0.0, 0.0))),
        (
            Box::new(move |p: Point| (p.x - c0.x) / h),
            Box::new(move |_| (1.0 / h, 0.0)),
        ),
        (
            Box::new(move |p: Point| (p.y - c0.y) / h),
            Box::new(move |_| (0.0, 1.0 / h)),
        ),
    ];
    let n_edges = mesh.cells[cell].n_edges();
    let mut out = Vec::with_capacity(3);
    for (u, grad) in &fields {
        let mut local = DVector::zeros(layout.local_dofs(n_edges));
        let ci = project_cell_onto(mesh, cell, basis_k, u, 2 * layout.k + 2)?;
        local.rows_mut(0, ci.len()).copy_from(&ci);
        let mut off = ci.len();
        for &(e, _) in &mesh.cells[cell].edges {
            let n_e = mesh.edges[e].normal;
            let cb = project_edge_with(mesh, e, layout.p, u, 2 * layout.p + 2)?;
            let cn = project_edge_with(
                mesh,
                e,
                layout.q,
                |pt| {
                    let (ux, uy) = grad(pt);
                    ux * n_e.x + uy * n_e.y
                },
                2 * layout.q + 2,
            )?;
            local.rows_mut(off, cb.len()).copy_from(&cb);
            off += layout.trace_block();
            local.rows_mut(off, cn.len()).copy_from(&cn);
            off += layout.normal_block();
        }
        out.push(local);
    }
    Ok(out)
}

/// Draws random local weak DOF vectors with the consistent-affine
/// component projected out (in ℓ²), so norm ratios are well defined. The
/// orthonormalized kernel basis is built once per cell.
pub struct KernelFreeSampler {
    n: usize,
    basis: Vec<DVector<f64>>,
}

impl KernelFreeSampler {
    pub fn new(
        mesh: &PolyMesh,
        cell: usize,
        kernel: &LocalWeakLaplacian,
        map: &DofMap,
    ) -> Result<Self> {
        let n = map.layout.local_dofs(mesh.cells[cell].n_edges());
        let affine = consistent_affine_dofs(mesh, cell, kernel, map)?;
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(3);
        for mut a in affine {
            for b in &basis {
                let d = a.dot(b);
                a.axpy(-d, b, 1.0);
            }
            let norm = a.norm();
            if norm > 1e-13 {
                basis.push(a / norm);
            }
        }
        Ok(Self { n, basis })
    }

    pub fn draw(&self, rng: &mut SplitMix64) -> DVector<f64> {
        let mut v = DVector::from_vec(rng.normal_vec(self.n));
        for b in &self.basis {
            let d = v.dot(b);
            v.axpy(-d, b, 1.0);
        }
        v
    }
}

/// Ratio |||v|||_T-contribution / ‖v‖_{2,h}-contribution for one local DOF
/// vector, or `None` when the denominator vanishes.
pub fn local_norm_ratio(
    mesh: &PolyMesh,
    cell: usize,
    kernel: &LocalWeakLaplacian,
    map: &DofMap,
    local: &DVector<f64>,
) -> Option<f64> {
    let num = kernel.energy_sq(local);
    let den = local_h2_sq(mesh, cell, kernel, map, local);
    if den <= 1e-28 * local.norm_squared().max(1.0) {
        None
    } else {
        Some((num / den).sqrt())
    }
}

/// Measures (c_min, c_max) of the equivalence C₁‖v‖_{2,h} ≤ |||v||| ≤
/// C₂‖v‖_{2,h} over random kernel-free local weak DOF vectors on one cell.
pub fn verify_norm_equivalence(
    mesh: &PolyMesh,
    cell: usize,
    kernel: &LocalWeakLaplacian,
    map: &DofMap,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    debug_assert!(trials >= 100);
    let sampler = KernelFreeSampler::new(mesh, cell, kernel, map)?;
    let mut rng = SplitMix64::new(seed);
    let mut c_min = f64::INFINITY;
    let mut c_max: f64 = 0.0;
    for _ in 0..trials {
        let v = sampler.draw(&mut rng);
        if let Some(ratio) = local_norm_ratio(mesh, cell, kernel, map, &v) {
            c_min = c_min.min(ratio);
            c_max = c_max.max(ratio);
        }
    }
    Ok((c_min, c_max))
}

// ---------------------------------------------------------------------------
// bubble functions

/// Element and edge bubbles built from the squared edge linear forms
/// l_i(x) = (X − A_i)·n_i / h_T.
pub struct BubbleFunction {
    h_t: f64,
    /// (point on edge, unit outward normal) per edge in loop order.
    edge_forms: Vec<(Point, Point)>,
    /// Π l_i² at the normalization point.
    pub normalization: f64,
    /// Normalization point: the cell's interior point (the barycenter can
    /// fall outside a non-convex cell).
    pub interior_point: Point,
}

impl BubbleFunction {
    fn l(&self, i: usize, x: Point) -> f64 {
        let (a, n) = self.edge_forms[i];
        (x - a).dot(n) / self.h_t
    }

    pub fn n_edges(&self) -> usize {
        self.edge_forms.len()
    }

    /// Element bubble Φ_B(x) = Π l_i²(x), scaled to 1 at the interior point.
    pub fn element_bubble(&self, x: Point) -> f64 {
        let mut prod = 1.0;
        for i in 0..self.n_edges() {
            let l = self.l(i, x);
            prod *= l * l;
        }
        prod / self.normalization
    }

    /// Edge bubble φ_{e_k}(x) = Π_{i≠k} l_i²(x) (unscaled).
    pub fn edge_bubble(&self, k: usize, x: Point) -> f64 {
        let mut prod = 1.0;
        for i in 0..self.n_edges() {
            if i == k {
                continue;
            }
            let l = self.l(i, x);
            prod *= l * l;
        }
        prod
    }
}

/// Builds the bubble data for a cell.
pub fn build_bubbles(mesh: &PolyMesh, cell: usize) -> BubbleFunction {
    let c = &mesh.cells[cell];
    let edge_forms = c
        .edges
        .iter()
        .map(|&(e, s)| {
            let edge = &mesh.edges[e];
            (edge.midpoint, edge.normal * (s as f64))
        })
        .collect::<Vec<_>>();
    let mut bubble = BubbleFunction {
        h_t: c.h,
        edge_forms,
        normalization: 1.0,
        interior_point: c.interior_point,
    };
    let raw = bubble.element_bubble(c.interior_point);
    assert!(raw > 0.0, "interior point lies on an edge line");
    bubble.normalization = raw;
    bubble
}

/// Measured ρ₀: min of Φ_B over the largest sub-triangle shrunk by 0.5
/// about its centroid (a barycentric sample grid).
pub fn measure_rho0(mesh: &PolyMesh, cell: usize, bubble: &BubbleFunction) -> f64 {
    let tris = mesh.cell_triangles(cell);
    let tri = tris
        .iter()
        .max_by(|a, b| {
            let fa = (a[1] - a[0]).cross(a[2] - a[0]);
            let fb = (b[1] - b[0]).cross(b[2] - b[0]);
            fa.partial_cmp(&fb).expect("finite areas")
        })
        .expect("non-empty triangulation");
    let centroid = (tri[0] + tri[1] + tri[2]) * (1.0 / 3.0);
    let shrink = |p: Point| centroid + (p - centroid) * 0.5;
    let (a, b, c) = (shrink(tri[0]), shrink(tri[1]), shrink(tri[2]));
    let m = 12;
    let mut min = f64::INFINITY;
    for i in 0..=m {
        for j in 0..=(m - i) {
            let k = m - i - j;
            let p =
                a * (i as f64 / m as f64) + b * (j as f64 / m as f64) + c * (k as f64 / m as f64);
            min = min.min(bubble.element_bubble(p));
        }
    }
    min
}

/// Measured ρ₁ for edge k: min of φ_{e_k} over the middle half of the edge.
pub fn measure_rho1(mesh: &PolyMesh, cell: usize, bubble: &BubbleFunction, k: usize) -> f64 {
    let (e, _) = mesh.cells[cell].edges[k];
    let edge = &mesh.edges[e];
    let a = mesh.vertices[edge.vertices.0];
    let b = mesh.vertices[edge.vertices.1];
    let mut min = f64::INFINITY;
    let m = 20;
    for i in 0..=m {
        // Middle half: t in [0.25, 0.75].
        let t = 0.25 + 0.5 * i as f64 / m as f64;
        let p = a + (b - a) * t;
        min = min.min(bubble.edge_bubble(k, p));
    }
    min
}

// ---------------------------------------------------------------------------
// convergence reporting

/// One refinement level of a convergence study.
#[derive(Clone, Debug)]
pub struct LevelRecord {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub ndof: usize,
    pub energy_err: f64,
    pub h2_err: f64,
    pub l2_err: f64,
}

/// Error history over a refinement family with observed rates.
#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub records: Vec<LevelRecord>,
}

impl ErrorReport {
    /// (energy_rate, l2_rate) per level; `None` on the first level. Rates
    /// are log(e_prev/e_cur)/log(h_prev/h_cur).
    pub fn rates(&self) -> Vec<(Option<f64>, Option<f64>)> {
        let mut out = Vec::with_capacity(self.records.len());
        for (i, rec) in self.records.iter().enumerate() {
            if i == 0 {
                out.push((None, None));
                continue;
            }
            let prev = &self.records[i - 1];
            let denom = (prev.h / rec.h).ln();
            let rate = |e_prev: f64, e_cur: f64| {
                if e_prev > 0.0 && e_cur > 0.0 {
                    Some((e_prev / e_cur).ln() / denom)
                } else {
                    None
                }
            };
            out.push((
                rate(prev.energy_err, rec.energy_err),
                rate(prev.l2_err, rec.l2_err),
            ));
        }
        out
    }

    pub fn final_energy_rate(&self) -> Option<f64> {
        self.rates().last().and_then(|r| r.0)
    }

    pub fn final_l2_rate(&self) -> Option<f64> {
        self.rates().last().and_then(|r| r.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_nonconvex_mesh, generate_square_mesh, Rect};
    use crate::solver::{
        assemble, build_kernels, impose_boundary, inject_qh, solve, BoundaryValues, DofMap,
    };
    use crate::weak_laplacian::{RMode, WeakDofLayout};

    fn setup(mesh: &PolyMesh, k: usize) -> (DofMap, ElementKernels) {
        let layout = WeakDofLayout::with_defaults(k, RMode::Nonconvex).unwrap();
        let map = DofMap::new(mesh, layout);
        let kernels = build_kernels(mesh, &layout).unwrap();
        (map, kernels)
    }

    #[test]
    fn manufactured_solutions_are_consistent() {
        let pts: Vec<Point> = (1..6)
            .map(|i| Point::new(0.13 * i as f64, 0.71 - 0.09 * i as f64))
            .collect();
        let trig = manufactured_trig();
        assert!(trig.fd_residual(&pts, 3e-3) < 1e-4);
        for k in [2, 3, 4] {
            let poly = manufactured_poly(k);
            assert!(poly.fd_residual(&pts, 3e-3) < 1e-4, "k = {k}");
        }
        // f(0.5, 0.5) = 4π⁴ for the trig solution; ξ ≡ 0 on ∂[0,1]².
        let f_mid = (trig.f)(Point::new(0.5, 0.5));
        assert!((f_mid - 4.0 * std::f64::consts::PI.powi(4)).abs() < 1e-10);
        for t in [0.0, 0.3, 1.0] {
            assert!((trig.u)(Point::new(t, 0.0)).abs() < 1e-15);
            assert!((trig.u)(Point::new(0.0, t)).abs() < 1e-15);
        }
        // poly k=2: f ≡ 0 and ∂u/∂n = 2 on the x = 1 edge.
        let p2 = manufactured_poly(2);
        assert_eq!((p2.f)(Point::new(0.3, 0.9)), 0.0);
        let (ux, _) = (p2.grad_u)(Point::new(1.0, 0.4));
        assert!((ux - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_weak_function_has_zero_norms() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let v = WeakDofVector::zeros(&map);
        assert_eq!(energy_norm(&mesh, &map, &kernels, &v), 0.0);
        assert_eq!(discrete_h2_norm(&mesh, &map, &kernels, &v), 0.0);
    }

    // Injected x² + y²: ‖v‖_{2,h} = (Σ_T 16·area)^{1/2} = 4 on the unit
    // square; the jump terms vanish because p ≥ 2, q ≥ 1 represent the
    // traces exactly.
    #[test]
    fn h2_norm_of_injected_quadratic_is_four() {
        for mesh in [
            generate_square_mesh(2, Rect::unit()),
            generate_nonconvex_mesh(2),
        ] {
            let (map, kernels) = setup(&mesh, 2);
            let v = inject_qh(
                &mesh,
                &map,
                |p| p.x * p.x + p.y * p.y,
                |p| (2.0 * p.x, 2.0 * p.y),
            )
            .unwrap();
            let norm = discrete_h2_norm(&mesh, &map, &kernels, &v);
            assert!((norm - 4.0).abs() < 1e-10, "{norm}");
        }
    }

    // Single unit trace DOF on an interior edge: direct quadrature oracle
    // for the h2 norm (only the h⁻³ jump term on the two incident cells).
    #[test]
    fn h2_norm_single_trace_dof_matches_oracle() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let e = (0..mesh.edges.len())
            .find(|&e| !mesh.edges[e].is_boundary())
            .unwrap();
        let mut v = WeakDofVector::zeros(&map);
        v.values[map.trace_offset(e)] = 1.0; // χ = P_0 ≡ 1 on the edge
        let norm = discrete_h2_norm(&mesh, &map, &kernels, &v);
        // Oracle: Σ over the 2 incident cells of h_T⁻³·∫_e 1² ds.
        let len = mesh.edges[e].length;
        let h_t = mesh.cells[mesh.edges[e].cells.0].h;
        let expect = (2.0 * len / (h_t * h_t * h_t)).sqrt();
        assert!((norm - expect).abs() < 1e-12 * expect, "{norm} vs {expect}");
    }

    #[test]
    fn consistent_affine_dofs_are_in_both_kernels() {
        let mesh = generate_nonconvex_mesh(1);
        let (map, kernels) = setup(&mesh, 2);
        for c in 0..mesh.cells.len() {
            let kernel = &kernels.kernels[c];
            for a in consistent_affine_dofs(&mesh, c, kernel, &map).unwrap() {
                let e = kernel.energy_sq(&a);
                let h2 = local_h2_sq(&mesh, c, kernel, &map, &a);
                let s = a.norm_squared();
                assert!(e <= 1e-16 * s, "energy {e:.3e}");
                assert!(h2 <= 1e-16 * s, "h2 {h2:.3e}");
            }
        }
    }

    #[test]
    fn norm_equivalence_on_unit_cells() {
        let mesh = generate_nonconvex_mesh(1);
        let (map, kernels) = setup(&mesh, 2);
        for c in 0..mesh.cells.len() {
            let (c_min, c_max) =
                verify_norm_equivalence(&mesh, c, &kernels.kernels[c], &map, 120, 7).unwrap();
            assert!(c_min > 0.0 && c_min.is_finite());
            assert!(c_max.is_finite() && c_max >= c_min);
        }
    }

    #[test]
    fn bubbles_vanish_on_their_edges() {
        let mesh = generate_square_mesh(1, Rect::unit());
        let bubble = build_bubbles(&mesh, 0);
        // Φ_B(normalization point) = 1; Φ_B = 0 at all 4 edge midpoints and
        // at every boundary quadrature point.
        assert!((bubble.element_bubble(bubble.interior_point) - 1.0).abs() < 1e-14);
        for &(e, _) in &mesh.cells[0].edges {
            assert!(bubble.element_bubble(mesh.edges[e].midpoint).abs() < 1e-13);
            let rule = edge_quadrature(&mesh, e, 11).unwrap();
            for &pt in &rule.points {
                assert!(bubble.element_bubble(pt).abs() < 1e-13);
            }
        }
        // Edge bubbles vanish on the other edges and stay positive on a
        // mid-portion of their own.
        for k in 0..4 {
            for (j, &(e, _)) in mesh.cells[0].edges.iter().enumerate() {
                if j != k {
                    assert!(bubble.edge_bubble(k, mesh.edges[e].midpoint).abs() < 1e-14);
                }
            }
            assert!(measure_rho1(&mesh, 0, &bubble, k) > 0.0);
        }
    }

    #[test]
    fn bubble_positive_on_chevron_subdomain() {
        let mesh = generate_nonconvex_mesh(1);
        for c in 0..mesh.cells.len() {
            let bubble = build_bubbles(&mesh, c);
            let rho0 = measure_rho0(&mesh, c, &bubble);
            assert!(rho0 > 0.0, "cell {c}: rho0 = {rho0:.3e}");
            for k in 0..mesh.cells[c].n_edges() {
                assert!(measure_rho1(&mesh, c, &bubble, k) > 0.0);
            }
        }
    }

    #[test]
    fn bubble_positive_at_strict_interior_of_convex_cells() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let bubble = build_bubbles(&mesh, 1);
        let pts = mesh.cell_points(1);
        let c = mesh.cells[1].centroid;
        for &p in &pts {
            // Strictly interior sample: 60% toward each vertex.
            let probe = c + (p - c) * 0.6;
            assert!(bubble.element_bubble(probe) > 0.0);
        }
    }

    // ℓ(u, v) = 0 for polynomial u with Δu ∈ P_r.
    #[test]
    fn ell_vanishes_for_low_degree_polynomials() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let sol = manufactured_poly(2);
        let mut rng = SplitMix64::new(5);
        let mut v = WeakDofVector::zeros(&map);
        for g in 0..map.total {
            if !map.is_constrained(g) {
                v.values[g] = rng.next_normal();
            }
        }
        let ell = residual_functional_ell(&mesh, &map, &kernels, &sol, &v).unwrap();
        assert!(ell.abs() < 1e-11, "{ell:.3e}");
        let zero = WeakDofVector::zeros(&map);
        assert_eq!(
            residual_functional_ell(&mesh, &map, &kernels, &sol, &zero).unwrap(),
            0.0
        );
    }

    #[test]
    fn ell_rejects_nonzero_boundary() {
        let mesh = generate_square_mesh(1, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let sol = manufactured_trig();
        let mut v = WeakDofVector::zeros(&map);
        let be = mesh.boundary_edges[0];
        v.values[map.trace_offset(be)] = 1.0;
        assert!(matches!(
            residual_functional_ell(&mesh, &map, &kernels, &sol, &v),
            Err(WgError::BoundaryNotZero(_))
        ));
    }

    // Error-equation identity: (Δ_w e_h, Δ_w v) = ℓ(u, v) for v ∈ V_h⁰.
    #[test]
    fn error_equation_identity_holds() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let sol = manufactured_trig();
        let bc = impose_boundary(
            &mesh,
            &map,
            |p| (sol.u)(p),
            |p| {
                let (ux, uy) = (sol.grad_u)(p);
                let n = unit_square_normal(p);
                ux * n.0 + uy * n.1
            },
        )
        .unwrap();
        let sys = assemble(&mesh, &map, &kernels, |p| (sol.f)(p), &bc).unwrap();
        let u_h = solve(&sys).unwrap();
        let mut rng = SplitMix64::new(99);
        for _ in 0..5 {
            let mut v = WeakDofVector::zeros(&map);
            for g in 0..map.total {
                if !map.is_constrained(g) {
                    v.values[g] = rng.next_normal();
                }
            }
            let lhs = error_energy_product(&mesh, &map, &kernels, &sol, &u_h, &v);
            let ell = residual_functional_ell(&mesh, &map, &kernels, &sol, &v).unwrap();
            let e_norm = energy_error(&mesh, &map, &kernels, &sol, &u_h);
            let v_norm = energy_norm(&mesh, &map, &kernels, &v);
            let scale = e_norm * v_norm + ell.abs();
            assert!(
                (lhs - ell).abs() <= 1e-8 * scale,
                "lhs {lhs:.6e} vs ell {ell:.6e}, scale {scale:.3e}"
            );
        }
    }

    // Zero-solution sanity for the L² error and exactness of the patch
    // solution for the energy error.
    #[test]
    fn error_norm_edge_cases() {
        let mesh = generate_square_mesh(2, Rect::unit());
        let (map, kernels) = setup(&mesh, 2);
        let sol = manufactured_poly(2);
        let u_inj = inject_qh(&mesh, &map, |p| (sol.u)(p), |p| (sol.grad_u)(p)).unwrap();
        let e = energy_error(&mesh, &map, &kernels, &sol, &u_inj);
        assert!(e < 1e-9, "{e:.3e}");
        // u ≡ 0 against the zero vector.
        let zero_sol = ManufacturedSolution {
            name: "zero",
            u: Box::new(|_| 0.0),
            grad_u: Box::new(|_| (0.0, 0.0)),
            laplace_u: Box::new(|_| 0.0),
            grad_laplace_u: Box::new(|_| (0.0, 0.0)),
            f: Box::new(|_| 0.0),
            sobolev_order: None,
        };
        let zero = WeakDofVector::zeros(&map);
        assert_eq!(l2_error(&mesh, &map, &kernels, &zero_sol, &zero), 0.0);
        assert_eq!(energy_error(&mesh, &map, &kernels, &zero_sol, &zero), 0.0);
        // u₀ = Q₀u: the L² error equals the best-approximation error.
        let trig = manufactured_trig();
        let u_q = inject_qh(&mesh, &map, |p| (trig.u)(p), |p| (trig.grad_u)(p)).unwrap();
        let best = l2_error(&mesh, &map, &kernels, &trig, &u_q);
        assert!(best > 0.0);
        let bc = BoundaryValues::homogeneous(&map);
        let sys = assemble(&mesh, &map, &kernels, |p| (trig.f)(p), &bc).unwrap();
        let u_h = solve(&sys).unwrap();
        // Galerkin solution cannot beat the interior best approximation
        // by definition of the projection.
        assert!(l2_error(&mesh, &map, &kernels, &trig, &u_h) >= 0.5 * best);
    }

    fn unit_square_normal(p: Point) -> (f64, f64) {
        if (p.x - 1.0).abs() < 1e-14 {
            (1.0, 0.0)
        } else if p.x.abs() < 1e-14 {
            (-1.0, 0.0)
        } else if (p.y - 1.0).abs() < 1e-14 {
            (0.0, 1.0)
        } else {
            (0.0, -1.0)
        }
    }

    #[test]
    fn report_rates_use_h_ratio() {
        let report = ErrorReport {
            records: vec![
                LevelRecord {
                    level: 0,
                    n: 4,
                    h: 0.25,
                    ndof: 100,
                    energy_err: 1.0,
                    h2_err: 1.0,
                    l2_err: 1.0,
                },
                LevelRecord {
                    level: 1,
                    n: 8,
                    h: 0.125,
                    ndof: 400,
                    energy_err: 0.5,
                    h2_err: 0.5,
                    l2_err: 0.25,
                },
            ],
        };
        let rates = report.rates();
        assert!(rates[0].0.is_none());
        assert!((rates[1].0.unwrap() - 1.0).abs() < 1e-14);
        assert!((rates[1].1.unwrap() - 2.0).abs() < 1e-14);
    }
}
