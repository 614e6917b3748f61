//! 2D polytopal meshes.
//!
//! Cells are simple polygons (convex or not) stored as counter-clockwise
//! vertex loops. Edges are derived from the loops and carry a fixed global
//! unit normal `n_e`:
//! - interior edges: `n_e` points from the lower-indexed to the
//!   higher-indexed incident cell;
//! - boundary edges: `n_e` points out of the domain.
//!
//! A cell sees each incident edge through a sign σ ∈ {+1, −1} such that
//! σ·n_e is the outward normal of that cell, so edge degrees of freedom can
//! be shared between neighbours without per-cell reinterpretation.
//!
//! Non-convex cells are integrated over an ear-clipping sub-triangulation
//! computed at construction time.

use crate::error::{Result, WgError};
use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};

/// Tolerance for unit-normal and orthogonality checks.
const NORMAL_TOL: f64 = 1e-14;

/// A point (or displacement) in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product, as displacements.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned rectangle, the domain of the structured generators.
#[derive(Clone, Copy, Debug)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub const fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }
}

/// An edge with its global orientation data.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex indices; the first-to-second direction defines the
    /// edge parametrization shared by both incident cells.
    pub vertices: (usize, usize),
    /// Fixed global unit normal n_e.
    pub normal: Point,
    pub length: f64,
    pub midpoint: Point,
    /// Incident cells: (first, second). `second` is `None` on the boundary.
    /// For interior edges `first < second` and `normal` is outward for
    /// `first`.
    pub cells: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Ear-clipping triangulation of a cell; triples are global vertex indices.
#[derive(Clone, Debug)]
pub struct SubTriangulation {
    pub triangles: Vec<[usize; 3]>,
}

/// A polygonal cell.
#[derive(Clone, Debug)]
pub struct Cell {
    /// Counter-clockwise vertex loop.
    pub vertices: Vec<usize>,
    /// Incident edges in loop order (edge i runs loop[i] -> loop[i+1]),
    /// with the sign σ making σ·n_e outward for this cell.
    pub edges: Vec<(usize, i8)>,
    /// Cell diameter: max pairwise vertex distance.
    pub h: f64,
    pub area: f64,
    /// Polygon centroid (may lie outside a non-convex cell).
    pub centroid: Point,
    /// A point guaranteed strictly inside: the centroid for convex cells,
    /// the centroid of the largest sub-triangle otherwise.
    pub interior_point: Point,
    pub triangulation: SubTriangulation,
}

impl Cell {
    /// Number of edges (N in the r = 2N + k - 2 rule).
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Immutable polytopal mesh. Construction is single-threaded; afterwards
/// the mesh is read-only and safe to share across element-parallel loops.
#[derive(Clone, Debug)]
pub struct PolyMesh {
    pub vertices: Vec<Point>,
    pub edges: Vec<Edge>,
    pub cells: Vec<Cell>,
    pub boundary_edges: Vec<usize>,
    /// Mesh size: max cell diameter.
    pub h: f64,
}

// ---------------------------------------------------------------------------
// polygon helpers

/// Twice the signed area of the polygon (positive for CCW loops).
fn signed_area_2(points: &[Point]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        acc += a.cross(b);
    }
    acc
}

fn polygon_centroid(points: &[Point], area: f64) -> Point {
    let n = points.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let w = a.cross(b);
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    Point::new(cx / (6.0 * area), cy / (6.0 * area))
}

fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// Strict point-in-polygon by crossing count. Intended for points a safe
/// distance from the boundary.
pub fn point_in_polygon(p: Point, points: &[Point]) -> bool {
    let n = points.len();
    let mut inside = false;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let t = (p.y - a.y) / (b.y - a.y);
            if p.x < a.x + t * (b.x - a.x) {
                inside = !inside;
            }
        }
    }
    inside
}

/// Indices of reflex vertices (interior angle > π) of a CCW simple polygon.
pub fn reflex_vertices(points: &[Point]) -> Vec<usize> {
    let n = points.len();
    let scale: f64 = points
        .iter()
        .zip(points.iter().cycle().skip(1))
        .map(|(a, b)| (*b - *a).norm())
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale * scale;
    (0..n)
        .filter(|&i| {
            let prev = points[(i + n - 1) % n];
            let cur = points[i];
            let next = points[(i + 1) % n];
            (cur - prev).cross(next - cur) < -tol
        })
        .collect()
}

/// Ear-clipping triangulation of a simple CCW polygon. Returns triangles as
/// index triples into `points`.
pub fn ear_clip(points: &[Point]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(WgError::SelfIntersectingPolygon(format!(
            "polygon has {n} vertices"
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i] == points[j] {
                return Err(WgError::SelfIntersectingPolygon(format!(
                    "repeated vertex at loop positions {i} and {j}"
                )));
            }
        }
    }
    let scale: f64 = points
        .iter()
        .zip(points.iter().cycle().skip(1))
        .map(|(a, b)| (*b - *a).norm())
        .fold(0.0, f64::max);
    let area_tol = 1e-12 * scale * scale;

    let mut idx: Vec<usize> = (0..n).collect();
    let mut triangles = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let ia = idx[(i + m - 1) % m];
            let ib = idx[i];
            let ic = idx[(i + 1) % m];
            let (a, b, c) = (points[ia], points[ib], points[ic]);
            // Strictly convex corner of the remaining loop.
            if (b - a).cross(c - b) <= area_tol {
                continue;
            }
            // No other remaining vertex inside the candidate ear.
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = points[j];
                let s0 = (b - a).cross(p - a);
                let s1 = (c - b).cross(p - b);
                let s2 = (a - c).cross(p - c);
                s0 > -area_tol && s1 > -area_tol && s2 > -area_tol
            });
            if blocked {
                continue;
            }
            triangles.push([ia, ib, ic]);
            idx.remove(i);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(WgError::SelfIntersectingPolygon(
                "ear clipping stalled".to_string(),
            ));
        }
    }
    triangles.push([idx[0], idx[1], idx[2]]);
    Ok(triangles)
}

/// Triangulates one cell-shaped polygon given as a point loop.
pub fn triangulate_polygon(points: &[Point]) -> Result<SubTriangulation> {
    Ok(SubTriangulation {
        triangles: ear_clip(points)?,
    })
}

// ---------------------------------------------------------------------------
// mesh construction

impl PolyMesh {
    /// Builds a mesh from vertices and CCW cell loops, deriving edges,
    /// normals, signs, and per-cell geometry. Loops given clockwise are
    /// reversed.
    pub fn from_cells(vertices: Vec<Point>, loops: Vec<Vec<usize>>) -> Result<PolyMesh> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(WgError::InvalidMesh(format!("vertex {i} is not finite")));
            }
        }
        let mut cell_loops = Vec::with_capacity(loops.len());
        for (c, mut lp) in loops.into_iter().enumerate() {
            if lp.len() < 3 {
                return Err(WgError::InvalidMesh(format!(
                    "cell {c} has fewer than 3 vertices"
                )));
            }
            if lp.iter().any(|&v| v >= vertices.len()) {
                return Err(WgError::InvalidMesh(format!(
                    "cell {c} references a vertex out of range"
                )));
            }
            let pts: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
            let a2 = signed_area_2(&pts);
            if a2.abs() < 1e-300 {
                return Err(WgError::InvalidMesh(format!("cell {c} has zero area")));
            }
            if a2 < 0.0 {
                lp.reverse();
            }
            cell_loops.push(lp);
        }

        // Edge derivation: key = sorted vertex pair.
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_verts: Vec<(usize, usize)> = Vec::new();
        let mut incidences: Vec<Vec<usize>> = Vec::new();
        for (c, lp) in cell_loops.iter().enumerate() {
            for i in 0..lp.len() {
                let a = lp[i];
                let b = lp[(i + 1) % lp.len()];
                if a == b {
                    return Err(WgError::InvalidMesh(format!(
                        "cell {c} has a zero-length edge"
                    )));
                }
                let key = (a.min(b), a.max(b));
                let e = *edge_of.entry(key).or_insert_with(|| {
                    edge_verts.push(key);
                    incidences.push(Vec::new());
                    edge_verts.len() - 1
                });
                incidences[e].push(c);
            }
        }
        for (e, inc) in incidences.iter().enumerate() {
            if inc.len() > 2 {
                return Err(WgError::InvalidMesh(format!(
                    "edge {e} is shared by {} cells",
                    inc.len()
                )));
            }
        }

        // Per-cell geometry.
        let mut cells = Vec::with_capacity(cell_loops.len());
        for lp in &cell_loops {
            cells.push(build_cell(&vertices, lp)?);
        }

        // Normals: outward of the lower-indexed cell; boundary edges are
        // outward of their only cell (= outward of the domain).
        let mut edges = Vec::with_capacity(edge_verts.len());
        let mut boundary_edges = Vec::new();
        for (e, &(lo, hi)) in edge_verts.iter().enumerate() {
            let inc = &incidences[e];
            let owner = *inc.iter().min().expect("edge with no cell");
            let normal = outward_normal_on_edge(&vertices, &cell_loops[owner], lo, hi);
            let pa = vertices[lo];
            let pb = vertices[hi];
            let cells_pair = if inc.len() == 2 {
                let a = inc[0].min(inc[1]);
                let b = inc[0].max(inc[1]);
                (a, Some(b))
            } else {
                boundary_edges.push(e);
                (inc[0], None)
            };
            edges.push(Edge {
                vertices: (lo, hi),
                normal,
                length: pa.distance(pb),
                midpoint: (pa + pb) * 0.5,
                cells: cells_pair,
            });
        }

        // Signs: σ·n_e must be outward for each incident cell.
        for (c, lp) in cell_loops.iter().enumerate() {
            let m = lp.len();
            let mut cell_edges = Vec::with_capacity(m);
            for i in 0..m {
                let a = lp[i];
                let b = lp[(i + 1) % m];
                let e = edge_of[&(a.min(b), a.max(b))];
                let outward = outward_normal_on_edge(&vertices, lp, a, b);
                let d = outward.dot(edges[e].normal);
                debug_assert!(
                    (d.abs() - 1.0).abs() < 1e-10,
                    "normal mismatch on edge {e}: dot = {d}"
                );
                cell_edges.push((e, if d > 0.0 { 1 } else { -1 }));
            }
            cells[c].edges = cell_edges;
        }

        let h = cells.iter().map(|c| c.h).fold(0.0, f64::max);
        Ok(PolyMesh {
            vertices,
            edges,
            cells,
            boundary_edges,
            h,
        })
    }

    /// Sign σ of `edge` as seen from `cell`: σ·n_e is outward for the cell.
    pub fn edge_sign(&self, cell: usize, edge: usize) -> Result<i8> {
        self.cells[cell]
            .edges
            .iter()
            .find(|(e, _)| *e == edge)
            .map(|&(_, s)| s)
            .ok_or(WgError::EdgeNotIncident { cell, edge })
    }

    /// Loop points of a cell.
    pub fn cell_points(&self, cell: usize) -> Vec<Point> {
        self.cells[cell]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    /// Sub-triangulation of a cell as point triples.
    pub fn cell_triangles(&self, cell: usize) -> Vec<[Point; 3]> {
        self.cells[cell]
            .triangulation
            .triangles
            .iter()
            .map(|t| {
                [
                    self.vertices[t[0]],
                    self.vertices[t[1]],
                    self.vertices[t[2]],
                ]
            })
            .collect()
    }

    /// Validates every mesh invariant; `rho_mesh` is the lower bound for the
    /// shape-regularity proxy area/h_T² per cell.
    pub fn validate(&self, rho_mesh: f64) -> Result<()> {
        for (e, edge) in self.edges.iter().enumerate() {
            let (a, b) = edge.vertices;
            let t = self.vertices[b] - self.vertices[a];
            if (edge.normal.norm() - 1.0).abs() > NORMAL_TOL {
                return Err(WgError::InvalidMesh(format!("edge {e} normal not unit")));
            }
            if edge.normal.dot(t).abs() > NORMAL_TOL * t.norm().max(1.0) {
                return Err(WgError::InvalidMesh(format!(
                    "edge {e} normal not orthogonal"
                )));
            }
            if edge.length <= 0.0 || !edge.length.is_finite() {
                return Err(WgError::InvalidMesh(format!("edge {e} has zero length")));
            }
        }
        let mut edge_signs: Vec<Vec<(usize, i8)>> = vec![Vec::new(); self.edges.len()];
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.area <= 0.0 || !cell.area.is_finite() {
                return Err(WgError::InvalidMesh(format!("cell {c} has area <= 0")));
            }
            if cell.area / (cell.h * cell.h) < rho_mesh {
                return Err(WgError::InvalidMesh(format!(
                    "cell {c} fails the shape-regularity proxy"
                )));
            }
            let pts = self.cell_points(c);
            if !point_in_polygon(cell.interior_point, &pts) {
                return Err(WgError::InvalidMesh(format!(
                    "cell {c} interior point is not interior"
                )));
            }
            let tri_area: f64 = self
                .cell_triangles(c)
                .iter()
                .map(|t| triangle_area(t[0], t[1], t[2]))
                .sum();
            if (tri_area - cell.area).abs() > 1e-12 * cell.area {
                return Err(WgError::InvalidMesh(format!(
                    "cell {c} sub-triangulation area mismatch"
                )));
            }
            // σ·n_e outward: nudge the edge midpoint and test containment.
            for &(e, s) in &cell.edges {
                let eps = 1e-8 * cell.h;
                let out = self.edges[e].midpoint + self.edges[e].normal * (s as f64 * eps);
                let inn = self.edges[e].midpoint + self.edges[e].normal * (-(s as f64) * eps);
                if point_in_polygon(out, &pts) || !point_in_polygon(inn, &pts) {
                    return Err(WgError::InvalidMesh(format!(
                        "cell {c}: sign of edge {e} does not point outward"
                    )));
                }
                edge_signs[e].push((c, s));
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let signs = &edge_signs[e];
            match edge.cells.1 {
                Some(_) => {
                    if signs.len() != 2 || signs[0].1 + signs[1].1 != 0 {
                        return Err(WgError::InvalidMesh(format!(
                            "interior edge {e} signs are not opposite"
                        )));
                    }
                }
                None => {
                    if signs.len() != 1 || signs[0].1 != 1 {
                        return Err(WgError::InvalidMesh(format!(
                            "boundary edge {e} does not have σ = +1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn build_cell(vertices: &[Point], lp: &[usize]) -> Result<Cell> {
    let pts: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
    let area = 0.5 * signed_area_2(&pts);
    let centroid = polygon_centroid(&pts, area);
    let mut h: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            h = h.max(pts[i].distance(pts[j]));
        }
    }
    let local = ear_clip(&pts)?;
    let triangles: Vec<[usize; 3]> = local
        .iter()
        .map(|t| [lp[t[0]], lp[t[1]], lp[t[2]]])
        .collect();
    let interior_point = if reflex_vertices(&pts).is_empty() {
        centroid
    } else {
        // Polygon centroid may fall outside; the largest sub-triangle's
        // centroid never does.
        let largest = local
            .iter()
            .max_by(|s, t| {
                let sa = triangle_area(pts[s[0]], pts[s[1]], pts[s[2]]);
                let ta = triangle_area(pts[t[0]], pts[t[1]], pts[t[2]]);
                sa.partial_cmp(&ta).expect("finite areas")
            })
            .expect("non-empty triangulation");
        (pts[largest[0]] + pts[largest[1]] + pts[largest[2]]) * (1.0 / 3.0)
    };
    Ok(Cell {
        vertices: lp.to_vec(),
        edges: Vec::new(),
        h,
        area,
        centroid,
        interior_point,
        triangulation: SubTriangulation { triangles },
    })
}

/// Outward unit normal of the CCW loop `lp` along its edge from vertex `a`
/// to vertex `b` (in either traversal order).
fn outward_normal_on_edge(vertices: &[Point], lp: &[usize], a: usize, b: usize) -> Point {
    let m = lp.len();
    for i in 0..m {
        let u = lp[i];
        let v = lp[(i + 1) % m];
        if (u, v) == (a, b) || (u, v) == (b, a) {
            let t = vertices[v] - vertices[u];
            let n = Point::new(t.y, -t.x);
            return n * (1.0 / n.norm());
        }
    }
    unreachable!("edge ({a}, {b}) not on loop");
}

// ---------------------------------------------------------------------------
// generators

/// Uniform n×n mesh of axis-aligned squares (rectangles for a non-square
/// domain).
pub fn generate_square_mesh(n: usize, domain: Rect) -> PolyMesh {
    assert!(n >= 1, "n must be at least 1");
    let nv = n + 1;
    let dx = (domain.xmax - domain.xmin) / n as f64;
    let dy = (domain.ymax - domain.ymin) / n as f64;
    let mut vertices = Vec::with_capacity(nv * nv);
    for j in 0..nv {
        for i in 0..nv {
            vertices.push(Point::new(
                domain.xmin + i as f64 * dx,
                domain.ymin + j as f64 * dy,
            ));
        }
    }
    let at = |i: usize, j: usize| j * nv + i;
    let mut loops = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            loops.push(vec![at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    PolyMesh::from_cells(vertices, loops).expect("structured square mesh is always valid")
}

/// n×n family of pentagon pairs on the unit square: each square is split by
/// the two-segment polyline bottom-mid → offset → top-mid, with the offset
/// point displaced left by a quarter cell width. The left pentagon is a
/// chevron with exactly one reflex vertex; the right pentagon is convex.
/// Every cell has N = 5 edges and the family is exactly self-similar under
/// refinement.
pub fn generate_nonconvex_mesh(n: usize) -> PolyMesh {
    assert!(n >= 1, "n must be at least 1");
    let nv = n + 1;
    let w = 1.0 / n as f64;
    let mut vertices = Vec::new();
    // Grid corners.
    for j in 0..nv {
        for i in 0..nv {
            vertices.push(Point::new(i as f64 * w, j as f64 * w));
        }
    }
    let corner = |i: usize, j: usize| j * nv + i;
    // Midpoints of the horizontal grid segments (split-line endpoints).
    let mid_base = vertices.len();
    for j in 0..nv {
        for i in 0..n {
            vertices.push(Point::new((i as f64 + 0.5) * w, j as f64 * w));
        }
    }
    let mid = |i: usize, j: usize| mid_base + j * n + i;
    // Offset points, one per square, displaced toward the left piece.
    let off_base = vertices.len();
    for j in 0..n {
        for i in 0..n {
            vertices.push(Point::new((i as f64 + 0.25) * w, (j as f64 + 0.5) * w));
        }
    }
    let off = |i: usize, j: usize| off_base + j * n + i;

    let mut loops = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            // Chevron (reflex at the offset point).
            loops.push(vec![
                corner(i, j),
                mid(i, j),
                off(i, j),
                mid(i, j + 1),
                corner(i, j + 1),
            ]);
            // Convex pentagon completing the square.
            loops.push(vec![
                mid(i, j),
                corner(i + 1, j),
                corner(i + 1, j + 1),
                mid(i, j + 1),
                off(i, j),
            ]);
        }
    }
    PolyMesh::from_cells(vertices, loops).expect("chevron mesh is always valid")
}

// ---------------------------------------------------------------------------
// plain-text format

impl PolyMesh {
    /// Parses the plain-text polygon format: line 1 `NV NC`, then NV lines
    /// `x y`, then NC lines `m i1 ... im` with CCW vertex indices.
    pub fn from_text(text: &str) -> Result<PolyMesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines
            .next()
            .ok_or_else(|| WgError::InvalidMesh("empty mesh file".to_string()))?;
        let mut it = header.split_whitespace();
        let nv: usize = parse_field(it.next(), ln, "NV")?;
        let nc: usize = parse_field(it.next(), ln, "NC")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| WgError::InvalidMesh("unexpected end of vertex list".to_string()))?;
            let mut it = line.split_whitespace();
            let x: f64 = parse_field(it.next(), ln, "x")?;
            let y: f64 = parse_field(it.next(), ln, "y")?;
            vertices.push(Point::new(x, y));
        }
        let mut loops = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| WgError::InvalidMesh("unexpected end of cell list".to_string()))?;
            let mut it = line.split_whitespace();
            let m: usize = parse_field(it.next(), ln, "m")?;
            let mut lp = Vec::with_capacity(m);
            for k in 0..m {
                let v: usize = parse_field(it.next(), ln, &format!("i{}", k + 1))?;
                lp.push(v);
            }
            loops.push(lp);
        }
        PolyMesh::from_cells(vertices, loops)
    }

    /// Writes the plain-text polygon format accepted by [`from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.vertices.len(), self.cells.len()));
        for v in &self.vertices {
            out.push_str(&format!("{:.17e} {:.17e}\n", v.x, v.y));
        }
        for c in &self.cells {
            out.push_str(&c.vertices.len().to_string());
            for &v in &c.vertices {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    tok.ok_or_else(|| WgError::InvalidMesh(format!("line {line}: missing field {name}")))?
        .parse()
        .map_err(|_| WgError::InvalidMesh(format!("line {line}: cannot parse field {name}")))
}
