//! Quadrature on polygonal cells and edges.
//!
//! Cell rules are collapsed tensor Gauss (Duffy) rules assembled over the
//! cell's sub-triangulation, so they stay exact on non-convex polygons.
//! Edge rules are 1D Gauss-Legendre mapped to the edge; the parameter
//! s ∈ [-1, 1] runs with the edge's endpoint order, which is the global
//! parametrization shared by the two incident cells.

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};

/// Hard cap on requested exactness; far above the r = 2N + k - 2 needs of
/// the discretization (degree 2r + 2 = 24 + 2 at N = 5, k = 3).
pub const MAX_EXACTNESS: usize = 60;

/// Neumaier compensated accumulator. Moment assembly against high-degree
/// bases cancels large intermediates; plain summation of a few hundred
/// nodes costs two digits that the commuting-identity contract needs.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Quadrature rule over a 2D region.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// All polynomials of total degree <= exactness integrate exactly.
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn integrate<F: Fn(Point) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Quadrature rule along an edge, retaining the s-parameter of each node so
/// edge polynomial bases can be evaluated directly.
#[derive(Clone, Debug)]
pub struct EdgeQuadrature {
    pub points: Vec<Point>,
    /// Parameter values in [-1, 1] matching `points`.
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl EdgeQuadrature {
    pub fn integrate<F: Fn(Point) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], exact to degree 2m - 1.
/// Nodes by Newton iteration on P_m from the Chebyshev initial guess.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_m(x) and P_m'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for n in 1..m {
                let p2 = ((2 * n + 1) as f64 * x * p1 - n as f64 * p0) / (n + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// Collapsed tensor Gauss rule on the triangle (a, b, c), exact for total
/// degree `exactness`.
pub fn triangle_rule(a: Point, b: Point, c: Point, exactness: usize) -> QuadratureRule {
    // Duffy map from the unit square: x = u, y = v(1 - u), jacobian (1 - u).
    // A monomial of total degree d picks up one extra u-degree from the
    // jacobian, hence the asymmetric point counts.
    let mu = (exactness + 3) / 2;
    let mv = (exactness + 2) / 2;
    let (xu, wu) = gauss_legendre(mu);
    let (xv, wv) = gauss_legendre(mv);
    let area2 = (b - a).cross(c - a);
    let mut points = Vec::with_capacity(mu * mv);
    let mut weights = Vec::with_capacity(mu * mv);
    for (&su, &cu) in xu.iter().zip(&wu) {
        let u = 0.5 * (su + 1.0);
        for (&sv, &cv) in xv.iter().zip(&wv) {
            let v = 0.5 * (sv + 1.0);
            let x = u;
            let y = v * (1.0 - u);
            points.push(a + (b - a) * x + (c - a) * y);
            weights.push(cu * cv * 0.25 * (1.0 - u) * area2);
        }
    }
    QuadratureRule {
        points,
        weights,
        exactness,
    }
}

/// Composite rule over the cell's sub-triangulation.
pub fn cell_quadrature(mesh: &PolyMesh, cell: usize, exactness: usize) -> Result<QuadratureRule> {
    if exactness > MAX_EXACTNESS {
        return Err(WgError::UnsupportedDegree(exactness, MAX_EXACTNESS));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for tri in mesh.cell_triangles(cell) {
        let rule = triangle_rule(tri[0], tri[1], tri[2], exactness);
        points.extend(rule.points);
        weights.extend(rule.weights);
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness,
    })
}

/// Gauss-Legendre rule mapped onto an edge; `m` points give exactness
/// 2m - 1 in the arc-length parameter.
pub fn edge_quadrature(mesh: &PolyMesh, edge: usize, exactness: usize) -> Result<EdgeQuadrature> {
    if exactness > MAX_EXACTNESS {
        return Err(WgError::UnsupportedDegree(exactness, MAX_EXACTNESS));
    }
    let m = exactness / 2 + 1;
    let (s, w) = gauss_legendre(m);
    let e = &mesh.edges[edge];
    let a = mesh.vertices[e.vertices.0];
    let b = mesh.vertices[e.vertices.1];
    let half = e.length * 0.5;
    let points = s.iter().map(|&t| a + (b - a) * (0.5 * (t + 1.0))).collect();
    let weights = w.iter().map(|&c| c * half).collect();
    Ok(EdgeQuadrature {
        points,
        params: s,
        weights,
        exactness: 2 * m - 1,
    })
}
