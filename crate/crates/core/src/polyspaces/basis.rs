//! Polynomial bases on cells and edges.
//!
//! Cell bases span P_degree(T). The raw layer is a graded tensor-Legendre
//! family P_a(ξ)P_b(η), a + b ≤ degree, in bounding-box coordinates
//! ξ, η ∈ [-1, 1], evaluated by the three-term recurrence: unlike raw
//! scaled monomials, this keeps pointwise evaluation noise near machine
//! precision up to the r = 2N + k - 2 = 11+ degrees the weak Laplacian
//! needs on pentagons. From degree 6 upward the basis is additionally
//! orthonormalized against the cell's L² inner product (QR on the weighted
//! point-value matrix, then Cholesky refinement of the near-identity mass
//! matrix), so every P_r Gram matrix stays solvable to 1e-12.
//!
//! Edge bases are Legendre polynomials in the arc-length parameter
//! s ∈ [-1, 1] fixed by the edge's endpoint order, so trace DOFs mean the
//! same thing in both incident cells.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};
use crate::polyspaces::quadrature::{cell_quadrature, QuadratureRule};

/// Degree at which cell bases switch to the orthonormalized form.
pub const ORTHONORMALIZE_FROM: usize = 6;

/// Dimension of P_d in two variables.
pub fn dim_p(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Polynomial basis of P_degree on a cell (optionally L²-orthonormalized).
#[derive(Clone, Debug)]
pub struct CellBasis {
    pub degree: usize,
    /// The cell's interior point (kept for reference alongside `scale`).
    pub center: Point,
    /// Length scale h_T of the cell.
    pub scale: f64,
    /// Bounding-box center and half-widths defining ξ and η.
    bbox_center: Point,
    bbox_half: Point,
    /// Per-axis Legendre degrees in graded order: (0,0); (1,0), (0,1); ...
    exponents: Vec<(u32, u32)>,
    /// Row i = raw-function coefficients of basis function i; `None` means
    /// the raw graded tensor-Legendre basis.
    coeff: Option<DMatrix<f64>>,
}

impl CellBasis {
    /// Raw graded tensor-Legendre basis on the cell's bounding box.
    pub fn plain(mesh: &PolyMesh, cell: usize, degree: usize) -> Self {
        let c = &mesh.cells[cell];
        let pts: Vec<Point> = c.vertices.iter().map(|&v| mesh.vertices[v]).collect();
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        Self {
            degree,
            center: c.interior_point,
            scale: c.h,
            bbox_center: Point::new(0.5 * (xmin + xmax), 0.5 * (ymin + ymax)),
            bbox_half: Point::new(0.5 * (xmax - xmin), 0.5 * (ymax - ymin)),
            exponents: graded_exponents(degree),
            coeff: None,
        }
    }

    /// Policy constructor: orthonormalizes from [`ORTHONORMALIZE_FROM`] on.
    pub fn for_cell(mesh: &PolyMesh, cell: usize, degree: usize) -> Result<Self> {
        let basis = Self::plain(mesh, cell, degree);
        if degree < ORTHONORMALIZE_FROM {
            return Ok(basis);
        }
        basis.orthonormalized(mesh, cell)
    }

    /// Orthonormalizes against the cell L² inner product.
    pub fn orthonormalized(mut self, mesh: &PolyMesh, cell: usize) -> Result<Self> {
        let rule = cell_quadrature(mesh, cell, 2 * self.degree + 2)?;
        let dim = self.dim();
        // Weighted point-value matrix A with A^T A = mass matrix.
        let a = self.weighted_values(&rule);
        let qr = a.qr();
        let r = qr.r();
        let mut c = DMatrix::identity(dim, dim);
        // C = R^{-T}: solve R^T C^T = I column by column (R is upper).
        let rt = r.transpose();
        if !rt.solve_lower_triangular_mut(&mut c) {
            return Err(WgError::SingularMass(format!(
                "QR factor of the degree-{} basis is singular",
                self.degree
            )));
        }
        self.coeff = Some(c);
        // Refinement passes: the QR loses ~cond(A) digits, so re-measure the
        // near-identity mass matrix and fold its Cholesky inverse into the
        // coefficients until it is the identity to roundoff.
        for _ in 0..3 {
            let a = self.weighted_values(&rule);
            let mass = a.transpose() * &a;
            let dev = (&mass - DMatrix::<f64>::identity(dim, dim)).amax();
            if dev <= 1e-14 {
                break;
            }
            let chol = mass.cholesky().ok_or_else(|| {
                WgError::SingularMass(format!(
                    "refined mass matrix of the degree-{} basis is not SPD",
                    self.degree
                ))
            })?;
            let mut l_inv = DMatrix::identity(dim, dim);
            if !chol.l().solve_lower_triangular_mut(&mut l_inv) {
                return Err(WgError::SingularMass(
                    "Cholesky factor is not invertible".to_string(),
                ));
            }
            let c = self.coeff.take().expect("set above");
            self.coeff = Some(l_inv * c);
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn local(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.bbox_center.x) / self.bbox_half.x,
            (p.y - self.bbox_center.y) / self.bbox_half.y,
        )
    }

    /// Values of every raw function at `p`.
    fn raw_values(&self, p: Point) -> DVector<f64> {
        let (xi, eta) = self.local(p);
        let lx = legendre_table(xi, self.degree);
        let ly = legendre_table(eta, self.degree);
        DVector::from_iterator(
            self.dim(),
            self.exponents
                .iter()
                .map(|&(a, b)| lx.p[a as usize] * ly.p[b as usize]),
        )
    }

    fn raw_gradients(&self, p: Point) -> (DVector<f64>, DVector<f64>) {
        let (xi, eta) = self.local(p);
        let lx = legendre_table(xi, self.degree);
        let ly = legendre_table(eta, self.degree);
        let (inv_sx, inv_sy) = (1.0 / self.bbox_half.x, 1.0 / self.bbox_half.y);
        let mut gx = DVector::zeros(self.dim());
        let mut gy = DVector::zeros(self.dim());
        for (i, &(a, b)) in self.exponents.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            gx[i] = lx.dp[a] * ly.p[b] * inv_sx;
            gy[i] = lx.p[a] * ly.dp[b] * inv_sy;
        }
        (gx, gy)
    }

    fn raw_laplacians(&self, p: Point) -> DVector<f64> {
        let (xi, eta) = self.local(p);
        let lx = legendre_table(xi, self.degree);
        let ly = legendre_table(eta, self.degree);
        let (inv_sx2, inv_sy2) = (
            1.0 / (self.bbox_half.x * self.bbox_half.x),
            1.0 / (self.bbox_half.y * self.bbox_half.y),
        );
        let mut lap = DVector::zeros(self.dim());
        for (i, &(a, b)) in self.exponents.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            lap[i] = lx.ddp[a] * ly.p[b] * inv_sx2 + lx.p[a] * ly.ddp[b] * inv_sy2;
        }
        lap
    }

    fn transform(&self, raw: DVector<f64>) -> DVector<f64> {
        match &self.coeff {
            Some(c) => c * raw,
            None => raw,
        }
    }

    /// Values of every basis function at `p`.
    pub fn values(&self, p: Point) -> DVector<f64> {
        self.transform(self.raw_values(p))
    }

    /// Gradients (x and y components) of every basis function at `p`.
    pub fn gradients(&self, p: Point) -> (DVector<f64>, DVector<f64>) {
        let (gx, gy) = self.raw_gradients(p);
        (self.transform(gx), self.transform(gy))
    }

    /// Laplacians of every basis function at `p`.
    pub fn laplacians(&self, p: Point) -> DVector<f64> {
        self.transform(self.raw_laplacians(p))
    }

    /// Evaluates the polynomial with coefficient vector `coeffs` at `p`.
    pub fn eval(&self, coeffs: &DVector<f64>, p: Point) -> f64 {
        coeffs.dot(&self.values(p))
    }

    pub fn eval_gradient(&self, coeffs: &DVector<f64>, p: Point) -> (f64, f64) {
        let (gx, gy) = self.gradients(p);
        (coeffs.dot(&gx), coeffs.dot(&gy))
    }

    /// Point-value matrix (points × dim) scaled by sqrt of the weights, so
    /// that Aᵀ A is the mass matrix under `rule`.
    pub fn weighted_values(&self, rule: &QuadratureRule) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(rule.points.len(), self.dim());
        for (row, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let v = self.values(p);
            let s = w.sqrt();
            for j in 0..self.dim() {
                a[(row, j)] = v[j] * s;
            }
        }
        a
    }
}

fn graded_exponents(degree: usize) -> Vec<(u32, u32)> {
    let mut e = Vec::with_capacity(dim_p(degree));
    for d in 0..=degree as u32 {
        for b in 0..=d {
            e.push((d - b, b));
        }
    }
    e
}

/// Legendre values and first two derivatives P_0..P_degree at one point.
struct LegendreTable {
    p: Vec<f64>,
    dp: Vec<f64>,
    ddp: Vec<f64>,
}

fn legendre_table(x: f64, degree: usize) -> LegendreTable {
    let m = degree + 1;
    let mut p = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut ddp = vec![0.0; m];
    p[0] = 1.0;
    if degree >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for n in 1..degree {
        let a = (2 * n + 1) as f64;
        let b = n as f64;
        let c = (n + 1) as f64;
        p[n + 1] = (a * x * p[n] - b * p[n - 1]) / c;
        dp[n + 1] = (a * (p[n] + x * dp[n]) - b * dp[n - 1]) / c;
        ddp[n + 1] = (a * (2.0 * dp[n] + x * ddp[n]) - b * ddp[n - 1]) / c;
    }
    LegendreTable { p, dp, ddp }
}

/// Legendre basis of P_degree(e) in the edge parameter s ∈ [-1, 1].
#[derive(Clone, Copy, Debug)]
pub struct EdgeBasis {
    pub degree: usize,
}

impl EdgeBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(self) -> usize {
        self.degree + 1
    }

    /// Values of P_0..P_degree at parameter `s`.
    pub fn values(self, s: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0;
        if self.degree >= 1 {
            v[1] = s;
        }
        for n in 1..self.degree {
            v[n + 1] = ((2 * n + 1) as f64 * s * v[n] - n as f64 * v[n - 1]) / (n + 1) as f64;
        }
        v
    }

    pub fn eval(self, coeffs: &DVector<f64>, s: f64) -> f64 {
        coeffs.dot(&self.values(s))
    }
}

/// SPD Gram matrix of a basis with its Cholesky factorization.
#[derive(Clone, Debug)]
pub struct MassMatrix {
    pub matrix: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl MassMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| WgError::SingularMass("Cholesky factorization failed".to_string()))?;
        Ok(Self { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves M x = b with one step of iterative refinement and enforces
    /// the 1e-12 relative residual contract.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = self.chol.solve(b);
        let scale = b.norm();
        if scale == 0.0 {
            return Ok(x);
        }
        for _ in 0..2 {
            let r = b - &self.matrix * &x;
            if r.norm() / scale <= 1e-13 {
                break;
            }
            x += self.chol.solve(&r);
        }
        let res = (&self.matrix * &x - b).norm() / scale;
        if res > 1e-12 {
            return Err(WgError::SingularMass(format!(
                "solve residual {res:.3e} exceeds 1e-12"
            )));
        }
        Ok(x)
    }

    /// Multi-RHS variant of [`solve`](Self::solve).
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = self.chol.solve(b);
        let scale = b.norm();
        if scale == 0.0 {
            return Ok(x);
        }
        for _ in 0..2 {
            let r = b - &self.matrix * &x;
            if r.norm() / scale <= 1e-13 {
                break;
            }
            x += self.chol.solve(&r);
        }
        let res = (&self.matrix * &x - b).norm() / scale;
        if res > 1e-12 {
            return Err(WgError::SingularMass(format!(
                "multi-RHS solve residual {res:.3e} exceeds 1e-12"
            )));
        }
        Ok(x)
    }

    /// Quadratic form xᵀ M x (the squared L² norm of the polynomial with
    /// coefficients `x`).
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }
}

/// Mass matrix of a cell basis at the given quadrature exactness.
pub fn cell_mass(
    mesh: &PolyMesh,
    cell: usize,
    basis: &CellBasis,
    exactness: usize,
) -> Result<MassMatrix> {
    let rule = cell_quadrature(mesh, cell, exactness)?;
    let a = basis.weighted_values(&rule);
    MassMatrix::new(a.transpose() * &a)
}

/// Mass matrix of an edge basis (Legendre masses are diagonal, but the
/// matrix is assembled by quadrature like any other).
pub fn edge_mass(
    mesh: &PolyMesh,
    edge: usize,
    basis: EdgeBasis,
    exactness: usize,
) -> Result<MassMatrix> {
    let rule = crate::polyspaces::quadrature::edge_quadrature(mesh, edge, exactness)?;
    let mut a = DMatrix::zeros(rule.params.len(), basis.dim());
    for (row, (&s, &w)) in rule.params.iter().zip(&rule.weights).enumerate() {
        let v = basis.values(s);
        let sw = w.sqrt();
        for j in 0..basis.dim() {
            a[(row, j)] = v[j] * sw;
        }
    }
    MassMatrix::new(a.transpose() * &a)
}
