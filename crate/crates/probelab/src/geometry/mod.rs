//! Meshes, domains, needles, and the geometric oracle for impact parameters.
//!
//! Everything here is immutable after construction and safe to share
//! read-only across concurrent needle scans.

mod delaunay;
mod mesher;
mod needle;

pub use mesher::{build_domain_mesh, MeshStrategy};
pub use needle::{impact_parameter_oracle, needle_family, FanSpec, Needle};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A point (or vector) in the plane.  Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point { x: a[0], y: a[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    fn div(self, s: f64) -> Point {
        Point::new(self.x / s, self.y / s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn dist_point_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, vertices: &[Point]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let vi = vertices[i];
        let vj = vertices[j];
        if (vi.y > p.y) != (vj.y > p.y) {
            let xint = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
            if p.x < xint {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn polygon_signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        a += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * a
}

/// Check whether two proper segments intersect (excluding shared endpoints).
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Detect self-intersection of a closed polygon (non-adjacent edges crossing).
pub fn polygon_self_intersects(vertices: &[Point]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        for j in i + 1..n {
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue; // adjacent edges share a vertex
            }
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Domain description: the region the forward problem lives on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DomainSpec {
    Disk { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
}

impl DomainSpec {
    pub fn disk(center: Point, radius: f64) -> Self {
        DomainSpec::Disk { center, radius }
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        if polygon_self_intersects(&vertices) {
            return Err(Error::Geometry(
                "degenerate domain spec: self-intersecting polygon".into(),
            ));
        }
        if polygon_signed_area(&vertices).abs() < 1e-14 {
            return Err(Error::Geometry("degenerate domain spec: zero area".into()));
        }
        Ok(DomainSpec::Polygon { vertices })
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            DomainSpec::Disk { center, radius } => p.dist(*center) <= *radius,
            DomainSpec::Polygon { vertices } => point_in_polygon(p, vertices),
        }
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        match self {
            DomainSpec::Disk { center, radius } => (p.dist(*center) - radius).abs(),
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                let mut d = f64::INFINITY;
                for i in 0..n {
                    d = d.min(dist_point_segment(p, vertices[i], vertices[(i + 1) % n]));
                }
                d
            }
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            DomainSpec::Disk { center, radius } => (
                Point::new(center.x - radius, center.y - radius),
                Point::new(center.x + radius, center.y + radius),
            ),
            DomainSpec::Polygon { vertices } => {
                let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo.x = lo.x.min(v.x);
                    lo.y = lo.y.min(v.y);
                    hi.x = hi.x.max(v.x);
                    hi.y = hi.y.max(v.y);
                }
                (lo, hi)
            }
        }
    }

    /// Reference center used for angular arc marking.
    pub fn center(&self) -> Point {
        match self {
            DomainSpec::Disk { center, .. } => *center,
            DomainSpec::Polygon { vertices } => {
                let mut c = Point::new(0.0, 0.0);
                for v in vertices {
                    c = c + *v;
                }
                c / vertices.len() as f64
            }
        }
    }

    /// Boundary point in direction `theta` from the center.
    pub fn boundary_point(&self, theta: f64) -> Point {
        let c = self.center();
        match self {
            DomainSpec::Disk { radius, .. } => {
                Point::new(c.x + radius * theta.cos(), c.y + radius * theta.sin())
            }
            DomainSpec::Polygon { vertices } => {
                // Ray from the center; take the farthest boundary hit.
                let dir = Point::new(theta.cos(), theta.sin());
                let n = vertices.len();
                let mut best: Option<(f64, Point)> = None;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let e = b - a;
                    let denom = dir.cross(e);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let s = (a - c).cross(e) / denom;
                    let u = (a - c).cross(dir) / denom;
                    if s > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                        let p = c + dir * s;
                        if best.map(|(bs, _)| s > bs).unwrap_or(true) {
                            best = Some((s, p));
                        }
                    }
                }
                best.map(|(_, p)| p).unwrap_or(c)
            }
        }
    }
}

/// Arc marker for boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArcMarker {
    GammaArc,
    Other,
}

/// A boundary edge with its arc marker.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub marker: ArcMarker,
}

/// Triangulated domain with marked boundary arcs and optional
/// inclusion-interface markers.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Edges tracing a known inclusion boundary, when the mesh was built to
    /// conform to one.
    pub interface_edges: Vec<[usize; 2]>,
    /// Target edge length the mesh was built for.
    pub h: f64,
    centroids: Vec<Point>,
    is_boundary_node: Vec<bool>,
    /// Outer-boundary nodes ordered along the loop (counterclockwise).
    boundary_loop: Vec<usize>,
}

impl Mesh2D {
    /// Assemble a mesh from raw arrays, derive boundary data, and validate
    /// the structural invariants.
    pub fn from_raw(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        h: f64,
        interface_edges: Vec<[usize; 2]>,
    ) -> Result<Mesh2D> {
        let nv = vertices.len();
        for t in &triangles {
            for &i in t {
                if i >= nv {
                    return Err(Error::Mesh(format!("triangle index {i} out of range")));
                }
            }
        }
        // Orient all triangles counterclockwise.
        let mut triangles = triangles;
        for t in triangles.iter_mut() {
            let a = vertices[t[0]];
            let b = vertices[t[1]];
            let c = vertices[t[2]];
            if (b - a).cross(c - a) < 0.0 {
                t.swap(1, 2);
            }
        }
        // Boundary edges: edges adjacent to exactly one triangle.  BTreeMap
        // keeps the collection order deterministic.
        let mut edge_count: std::collections::BTreeMap<(usize, usize), (usize, usize)> =
            std::collections::BTreeMap::new();
        for t in &triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = edge_count.entry(key).or_insert((0, a));
                e.0 += 1;
                e.1 = a; // orientation of the last writer
            }
        }
        let mut boundary_edges = Vec::new();
        let mut is_boundary_node = vec![false; nv];
        for (&(a, b), &(count, first)) in edge_count.iter() {
            if count == 1 {
                // Keep the CCW orientation of the owning triangle.
                let (a, b) = if first == a { (a, b) } else { (b, a) };
                boundary_edges.push(BoundaryEdge {
                    a,
                    b,
                    marker: ArcMarker::Other,
                });
                is_boundary_node[a] = true;
                is_boundary_node[b] = true;
            } else if count > 2 {
                return Err(Error::Mesh(format!(
                    "edge ({a}, {b}) shared by {count} triangles"
                )));
            }
        }
        let centroids = triangles
            .iter()
            .map(|t| (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0)
            .collect();
        let mut mesh = Mesh2D {
            vertices,
            triangles,
            boundary_edges,
            interface_edges,
            h,
            centroids,
            is_boundary_node,
            boundary_loop: Vec::new(),
        };
        mesh.boundary_loop = mesh.trace_boundary_loop()?;
        mesh.validate()?;
        Ok(mesh)
    }

    fn trace_boundary_loop(&self) -> Result<Vec<usize>> {
        // next[a] = b for each oriented boundary edge a -> b
        let mut next: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
        for e in &self.boundary_edges {
            if next.insert(e.a, e.b).is_some() {
                return Err(Error::Mesh(format!(
                    "boundary is not a union of simple loops at node {}",
                    e.a
                )));
            }
        }
        if next.is_empty() {
            return Err(Error::Mesh("mesh has no boundary".into()));
        }
        // Outer loop: start from the boundary node with minimal (x, y).
        let start = *next
            .keys()
            .min_by(|&&a, &&b| {
                let pa = self.vertices[a];
                let pb = self.vertices[b];
                pa.x.partial_cmp(&pb.x)
                    .unwrap()
                    .then(pa.y.partial_cmp(&pb.y).unwrap())
            })
            .unwrap();
        let mut loop_nodes = vec![start];
        let mut cur = next[&start];
        while cur != start {
            loop_nodes.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::Mesh(format!("boundary loop broken at node {cur}")))?;
            if loop_nodes.len() > self.boundary_edges.len() + 1 {
                return Err(Error::Mesh("boundary loop does not close".into()));
            }
        }
        Ok(loop_nodes)
    }

    fn validate(&self) -> Result<()> {
        let floor = 1e-12 * self.h * self.h;
        for (i, t) in self.triangles.iter().enumerate() {
            let area = self.cell_area(i);
            if area <= floor {
                return Err(Error::Mesh(format!(
                    "triangle {i} has non-positive area {area} (indices {t:?})"
                )));
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    pub fn cell_area(&self, i: usize) -> f64 {
        let t = self.triangles[i];
        let a = self.vertices[t[0]];
        let b = self.vertices[t[1]];
        let c = self.vertices[t[2]];
        0.5 * (b - a).cross(c - a)
    }

    pub fn cell_centroid(&self, i: usize) -> Point {
        self.centroids[i]
    }

    /// Gradients of the three P1 basis functions on cell `i`.
    pub fn cell_gradients(&self, i: usize) -> [Point; 3] {
        let t = self.triangles[i];
        let a = self.vertices[t[0]];
        let b = self.vertices[t[1]];
        let c = self.vertices[t[2]];
        let inv2a = 1.0 / (2.0 * self.cell_area(i));
        [
            Point::new(b.y - c.y, c.x - b.x) * inv2a,
            Point::new(c.y - a.y, a.x - c.x) * inv2a,
            Point::new(a.y - b.y, b.x - a.x) * inv2a,
        ]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|i| self.cell_area(i)).sum()
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.is_boundary_node[i]
    }

    /// Outer-boundary nodes in loop order.
    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    /// Minimum interior angle over all cells, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut min_angle = f64::INFINITY;
        for t in &self.triangles {
            let p = [
                self.vertices[t[0]],
                self.vertices[t[1]],
                self.vertices[t[2]],
            ];
            for k in 0..3 {
                let u = p[(k + 1) % 3] - p[k];
                let v = p[(k + 2) % 3] - p[k];
                let ang = (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                min_angle = min_angle.min(ang);
            }
        }
        min_angle.to_degrees()
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                m = m.max(self.vertices[t[k]].dist(self.vertices[t[(k + 1) % 3]]));
            }
        }
        m
    }

    /// Mark boundary edges whose midpoint angle (about `center`) lies in the
    /// counterclockwise arc `[theta0, theta1]`; everything else is `Other`.
    pub fn mark_gamma_arc(&mut self, center: Point, theta0: f64, theta1: f64) -> Result<()> {
        let tau = std::f64::consts::TAU;
        let span = (theta1 - theta0).rem_euclid(tau);
        let span = if span == 0.0 { tau } else { span };
        for e in self.boundary_edges.iter_mut() {
            let mid = (self.vertices[e.a] + self.vertices[e.b]) / 2.0;
            let ang = (mid - center).angle();
            let rel = (ang - theta0).rem_euclid(tau);
            e.marker = if rel <= span {
                ArcMarker::GammaArc
            } else {
                ArcMarker::Other
            };
        }
        self.check_gamma_arc_connected()
    }

    fn check_gamma_arc_connected(&self) -> Result<()> {
        // Walk the boundary loop; gamma-marked edges must form one run
        // (allowing wrap-around).
        let marked: Vec<bool> = self.loop_edge_markers();
        let n = marked.len();
        let runs = (0..n)
            .filter(|&i| marked[i] && !marked[(i + n - 1) % n])
            .count();
        if marked.iter().any(|&m| m) && runs > 1 {
            return Err(Error::Mesh(format!(
                "gamma arc is split into {runs} disconnected runs"
            )));
        }
        Ok(())
    }

    /// Marker of each boundary-loop edge (edge i connects loop node i to i+1).
    fn loop_edge_markers(&self) -> Vec<bool> {
        let mut marker_of: std::collections::HashMap<(usize, usize), ArcMarker> =
            std::collections::HashMap::new();
        for e in &self.boundary_edges {
            marker_of.insert((e.a, e.b), e.marker);
        }
        let n = self.boundary_loop.len();
        (0..n)
            .map(|i| {
                let a = self.boundary_loop[i];
                let b = self.boundary_loop[(i + 1) % n];
                matches!(
                    marker_of.get(&(a, b)).or_else(|| marker_of.get(&(b, a))),
                    Some(ArcMarker::GammaArc)
                )
            })
            .collect()
    }

    /// Boundary nodes interior to the gamma arc: nodes whose two incident
    /// loop edges are both gamma-marked.  Hat data at these nodes is
    /// supported inside the arc.
    pub fn gamma_interior_nodes(&self) -> Vec<usize> {
        let marked = self.loop_edge_markers();
        let n = self.boundary_loop.len();
        (0..n)
            .filter(|&i| marked[i] && marked[(i + n - 1) % n])
            .map(|i| self.boundary_loop[i])
            .collect()
    }

    /// Cells whose centroid is farther than `delta` from the needle tail
    /// `{c(t') : 0 < t' <= t}`.
    pub fn exclusion_region(&self, needle: &Needle, t: f64, delta: f64) -> Result<Vec<usize>> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tail parameter t must be in (0, 1), got {t}"
            )));
        }
        if delta <= 0.0 {
            return Err(Error::InvalidInput("tube radius must be positive".into()));
        }
        let tail = needle.tail_polyline(t);
        let mut cells = Vec::new();
        let mut max_dist: f64 = 0.0;
        for i in 0..self.n_cells() {
            let d = needle::dist_point_polyline(self.centroids[i], &tail);
            max_dist = max_dist.max(d);
            if d > delta {
                cells.push(i);
            }
        }
        if cells.is_empty() {
            return Err(Error::Geometry(format!(
                "exclusion tube radius {delta} leaves no cells; \
                 it must be below the maximal centroid distance {max_dist}"
            )));
        }
        Ok(cells)
    }

    /// Plain-text export: header `nodes N triangles M`, then `N` coordinate
    /// rows and `M` index rows.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "nodes {} triangles {}",
            self.n_vertices(),
            self.n_cells()
        )?;
        for v in &self.vertices {
            writeln!(w, "{} {}", v.x, v.y)?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: std::io::BufRead>(r: R, h: f64) -> Result<Mesh2D> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Mesh("empty mesh file".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "triangles" {
            return Err(Error::Mesh(format!("bad mesh header '{header}'")));
        }
        let nv: usize = parts[1]
            .parse()
            .map_err(|_| Error::Mesh("bad node count".into()))?;
        let nt: usize = parts[3]
            .parse()
            .map_err(|_| Error::Mesh("bad triangle count".into()))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| Error::Mesh("truncated node section".into()))??;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Mesh("bad node row".into()))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Mesh("bad node row".into()))?;
            vertices.push(Point::new(x, y));
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines
                .next()
                .ok_or_else(|| Error::Mesh("truncated triangle section".into()))??;
            let mut it = line.split_whitespace();
            let mut tri = [0usize; 3];
            for v in tri.iter_mut() {
                *v = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Mesh("bad triangle row".into()))?;
            }
            triangles.push(tri);
        }
        Mesh2D::from_raw(vertices, triangles, h, Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_ops() {
        let p = Point::new(3.0, 4.0);
        assert_eq!(p.norm(), 5.0);
        assert_eq!((p - p).norm(), 0.0);
        assert_eq!(p.dot(Point::new(1.0, 0.0)), 3.0);
    }

    #[test]
    fn self_intersection_detected() {
        let bow = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(polygon_self_intersects(&bow));
        assert!(DomainSpec::polygon(bow).is_err());
        let square = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert!(!polygon_self_intersects(&square));
    }

    #[test]
    fn exclusion_region_nesting_and_tube_area() {
        let domain = DomainSpec::disk(Point::new(0.0, 0.0), 1.0);
        let mesh = build_domain_mesh(&domain, 0.05, MeshStrategy::Rings, None).unwrap();
        let needle = Needle::new(vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        let delta = 0.1;
        let k1 = mesh.exclusion_region(&needle, 0.25, delta).unwrap();
        let k2 = mesh.exclusion_region(&needle, 0.5, delta).unwrap();
        let set2: std::collections::HashSet<usize> = k2.iter().copied().collect();
        assert!(
            k1.iter().filter(|c| !set2.contains(c)).count() > 0,
            "larger tail should exclude strictly more cells"
        );
        for c in &k2 {
            assert!(k1.contains(c), "regions should nest: K(t2) inside K(t1)");
        }
        // excluded area approximates the tube area 2 delta L (+ end caps)
        let tail_len = 0.5 * needle.length();
        let excluded: f64 = (0..mesh.n_cells())
            .filter(|c| !set2.contains(c))
            .map(|c| mesh.cell_area(c))
            .sum();
        let tube = 2.0 * delta * tail_len + 0.5 * std::f64::consts::PI * delta * delta;
        assert!(
            (excluded - tube).abs() < 0.25 * tube,
            "excluded area {excluded} vs analytic tube {tube}"
        );
        // oversized delta produces the named-bound error
        let err = mesh.exclusion_region(&needle, 0.5, 10.0);
        assert!(err.is_err());
        // tiny t excludes only cells near the entry point
        let k0 = mesh.exclusion_region(&needle, 1e-6, 0.05).unwrap();
        let excluded_near_entry = (0..mesh.n_cells())
            .filter(|c| !k0.contains(c))
            .all(|c| mesh.cell_centroid(c).dist(Point::new(-1.0, 0.0)) < 0.1);
        assert!(excluded_near_entry);
    }

    #[test]
    fn mesh_text_roundtrip() {
        let mesh = build_domain_mesh(
            &DomainSpec::disk(Point::new(0.0, 0.0), 1.0),
            0.3,
            MeshStrategy::Rings,
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let back = Mesh2D::read_text(std::io::BufReader::new(&buf[..]), 0.3).unwrap();
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        assert_eq!(back.n_cells(), mesh.n_cells());
        assert!((back.total_area() - mesh.total_area()).abs() < 1e-12);
    }
}
