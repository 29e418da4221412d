//! Domain mesh generation.
//!
//! Two strategies:
//!
//! * `Rings` — structured concentric-ring triangulation of a disk.  Exactly
//!   mirror-symmetric about the horizontal axis through the center, which
//!   symmetry tests and spectral checks rely on.
//! * `Lattice` — jittered equilateral lattice plus boundary (and optional
//!   inclusion-interface) samples, triangulated by Bowyer-Watson and relaxed
//!   by a few validity-checked Laplacian sweeps.  Works for polygons and for
//!   meshes that must conform to a known inclusion boundary.

use super::delaunay::Delaunay;
use super::{DomainSpec, Mesh2D, Point};
use crate::error::{Error, Result};
use crate::scenario::InclusionShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshStrategy {
    Rings,
    Lattice,
}

/// Build a triangulation of `domain` with target edge length `h`.
///
/// When `interface` names an inclusion, the mesh conforms to its boundary:
/// consecutive interface samples become mesh edges, recorded in
/// `interface_edges`.
pub fn build_domain_mesh(
    domain: &DomainSpec,
    h: f64,
    strategy: MeshStrategy,
    interface: Option<&InclusionShape>,
) -> Result<Mesh2D> {
    if h <= 0.0 {
        return Err(Error::InvalidInput("target edge length must be > 0".into()));
    }
    match (strategy, domain, interface) {
        (MeshStrategy::Rings, DomainSpec::Disk { center, radius }, None) => {
            rings_mesh(*center, *radius, h)
        }
        (MeshStrategy::Rings, _, _) => Err(Error::Mesh(
            "rings strategy needs a disk domain without interface conformity".into(),
        )),
        (MeshStrategy::Lattice, _, _) => lattice_mesh(domain, h, interface),
    }
}

// ---------------------------------------------------------------------------
// Structured disk mesh
// ---------------------------------------------------------------------------

fn rings_mesh(center: Point, radius: f64, h: f64) -> Result<Mesh2D> {
    let n_rings = ((radius / (h * 0.8660254037844386)).round() as usize).max(2);
    let dr = radius / n_rings as f64;

    // Ring k has 2*m_k nodes; upper half angles are pi*p/m_k for p=0..=m_k,
    // the lower half is the exact mirror.
    let mut m: Vec<usize> = Vec::with_capacity(n_rings + 1);
    m.push(0); // placeholder for the center
    for k in 1..=n_rings {
        let r = dr * k as f64;
        // keep chords a bit under h so ring diagonals stay below 1.5 h
        m.push(((std::f64::consts::PI * r / (0.92 * h)).ceil() as usize).max(3));
    }

    let mut vertices = vec![center];
    let mut ring_start = vec![0usize; n_rings + 1];
    for k in 1..=n_rings {
        ring_start[k] = vertices.len();
        let r = dr * k as f64;
        let mk = m[k];
        // upper nodes p = 0..=mk; the two axis nodes are snapped exactly
        let mut upper = Vec::with_capacity(mk + 1);
        for p in 0..=mk {
            if p == 0 {
                upper.push(Point::new(center.x + r, center.y));
            } else if p == mk {
                upper.push(Point::new(center.x - r, center.y));
            } else {
                let th = std::f64::consts::PI * p as f64 / mk as f64;
                upper.push(Point::new(center.x + r * th.cos(), center.y + r * th.sin()));
            }
        }
        // full ring in angular order p = 0..2mk-1; lower nodes mirror upper
        for p in 0..(2 * mk) {
            if p <= mk {
                vertices.push(upper[p]);
            } else {
                let q = 2 * mk - p;
                let u = upper[q];
                vertices.push(Point::new(u.x, 2.0 * center.y - u.y));
            }
        }
    }

    let ring_node = |k: usize, p: usize| -> usize {
        if k == 0 {
            0
        } else {
            ring_start[k] + p % (2 * m[k])
        }
    };
    let mirror_pos = |k: usize, p: usize| -> usize {
        if k == 0 {
            0
        } else {
            (2 * m[k] - p % (2 * m[k])) % (2 * m[k])
        }
    };

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let push_mirrored = |tri: [(usize, usize); 3], triangles: &mut Vec<[usize; 3]>| {
        triangles.push([
            ring_node(tri[0].0, tri[0].1),
            ring_node(tri[1].0, tri[1].1),
            ring_node(tri[2].0, tri[2].1),
        ]);
        let mirrored = [
            (tri[0].0, mirror_pos(tri[0].0, tri[0].1)),
            (tri[2].0, mirror_pos(tri[2].0, tri[2].1)),
            (tri[1].0, mirror_pos(tri[1].0, tri[1].1)),
        ];
        // Skip exact duplicates (triangles lying on the symmetry axis).
        let t = [
            ring_node(mirrored[0].0, mirrored[0].1),
            ring_node(mirrored[1].0, mirrored[1].1),
            ring_node(mirrored[2].0, mirrored[2].1),
        ];
        let orig = triangles[triangles.len() - 1];
        let mut same = [t[0], t[1], t[2]];
        same.sort_unstable();
        let mut o = [orig[0], orig[1], orig[2]];
        o.sort_unstable();
        if same != o {
            triangles.push(t);
        }
    };

    // Center fan over the upper half of ring 1.
    for p in 0..m[1] {
        push_mirrored([(0, 0), (1, p), (1, p + 1)], &mut triangles);
    }
    // Ring bands, marching the upper halves in angle.
    for k in 2..=n_rings {
        let (m_in, m_out) = (m[k - 1], m[k]);
        let ang_in = |i: usize| std::f64::consts::PI * i as f64 / m_in as f64;
        let ang_out = |j: usize| std::f64::consts::PI * j as f64 / m_out as f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < m_in || j < m_out {
            let advance_outer = if j == m_out {
                false
            } else if i == m_in {
                true
            } else {
                ang_out(j + 1) <= ang_in(i + 1)
            };
            if advance_outer {
                push_mirrored([(k, j), (k, j + 1), (k - 1, i)], &mut triangles);
                j += 1;
            } else {
                push_mirrored([(k - 1, i + 1), (k - 1, i), (k, j)], &mut triangles);
                i += 1;
            }
        }
    }

    Mesh2D::from_raw(vertices, triangles, h, Vec::new())
}

// ---------------------------------------------------------------------------
// Lattice + Delaunay mesh
// ---------------------------------------------------------------------------

/// Deterministic jitter in [-1, 1] from an integer pair.
fn hash_jitter(i: i64, j: i64, salt: u64) -> f64 {
    let mut x = (i as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (j as u64).wrapping_mul(0xd1b54a32d192ed03)
        ^ salt;
    x ^= x >> 31;
    x = x.wrapping_mul(0x7fb5d329728ea185);
    x ^= x >> 27;
    x = x.wrapping_mul(0x81dadef4bc2dd44d);
    x ^= x >> 33;
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn domain_boundary_samples(domain: &DomainSpec, h: f64) -> Vec<Point> {
    match domain {
        DomainSpec::Disk { center, radius } => {
            let n = ((std::f64::consts::TAU * radius / h).round() as usize).max(8);
            (0..n)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / n as f64;
                    Point::new(center.x + radius * th.cos(), center.y + radius * th.sin())
                })
                .collect()
        }
        DomainSpec::Polygon { vertices } => {
            let mut pts = Vec::new();
            let n = vertices.len();
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let len = (b - a).norm();
                let segs = (len / h).ceil().max(1.0) as usize;
                for k in 0..segs {
                    pts.push(a + (b - a) * (k as f64 / segs as f64));
                }
            }
            pts
        }
    }
}

fn lattice_mesh(
    domain: &DomainSpec,
    h: f64,
    interface: Option<&InclusionShape>,
) -> Result<Mesh2D> {
    let boundary = domain_boundary_samples(domain, h);
    let n_boundary = boundary.len();

    let interface_pts: Vec<Point> = match interface {
        Some(shape) => {
            let per = match shape {
                InclusionShape::Disk { radius, .. } => std::f64::consts::TAU * radius,
                InclusionShape::Polygon { vertices } => {
                    let n = vertices.len();
                    (0..n)
                        .map(|i| (vertices[(i + 1) % n] - vertices[i]).norm())
                        .sum()
                }
            };
            let n = ((per / (0.9 * h)).round() as usize).max(8);
            shape.boundary_samples(n)
        }
        None => Vec::new(),
    };
    let n_interface = interface_pts.len();

    // Interior lattice with clearance from boundary and interface.
    let clearance = 0.55 * h;
    let (lo, hi) = domain.bounding_box();
    let dy = h * 0.8660254037844386;
    let mut lattice = Vec::new();
    let rows = ((hi.y - lo.y) / dy).ceil() as i64 + 1;
    let cols = ((hi.x - lo.x) / h).ceil() as i64 + 2;
    for r in 0..rows {
        let y = lo.y + r as f64 * dy;
        let x_off = if r % 2 == 0 { 0.0 } else { 0.5 * h };
        for c in 0..cols {
            let x = lo.x + x_off + c as f64 * h;
            let jx = 0.06 * h * hash_jitter(r, c, 0x5eed);
            let jy = 0.06 * h * hash_jitter(r, c, 0xfeed);
            let p = Point::new(x + jx, y + jy);
            if !domain.contains(p) || domain.distance_to_boundary(p) < clearance {
                continue;
            }
            if let Some(shape) = interface {
                if shape.signed_distance(p).abs() < clearance {
                    continue;
                }
            }
            lattice.push(p);
        }
    }

    let mut points = boundary;
    points.extend_from_slice(&interface_pts);
    let fixed = points.len();
    points.extend_from_slice(&lattice);
    if points.len() < 3 {
        return Err(Error::Mesh("domain too small for the requested h".into()));
    }

    let mut triangles = keep_inside(domain, &points, Delaunay::triangulate(&points));
    if triangles.is_empty() {
        return Err(Error::Mesh("triangulation produced no interior cells".into()));
    }

    smooth(&mut points, &triangles, fixed, domain, 4);
    // Re-triangulate once after smoothing; topology may improve.
    triangles = keep_inside(domain, &points, Delaunay::triangulate(&points));

    // Interface edges: consecutive interface samples that ended up connected.
    let mut interface_edges = Vec::new();
    if n_interface > 0 {
        let mut edge_set = std::collections::HashSet::new();
        for t in &triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
        for k in 0..n_interface {
            let a = n_boundary + k;
            let b = n_boundary + (k + 1) % n_interface;
            if edge_set.contains(&(a.min(b), a.max(b))) {
                interface_edges.push([a, b]);
            } else {
                return Err(Error::Mesh(format!(
                    "mesh does not conform to the inclusion interface between \
                     samples {k} and {}; reduce h",
                    (k + 1) % n_interface
                )));
            }
        }
    }

    Mesh2D::from_raw(points, triangles, h, interface_edges)
}

fn keep_inside(domain: &DomainSpec, points: &[Point], tris: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    tris.into_iter()
        .filter(|t| {
            let c = (points[t[0]] + points[t[1]] + points[t[2]]) / 3.0;
            domain.contains(c)
        })
        .collect()
}

/// Damped Laplacian smoothing of non-fixed nodes with per-move validity
/// checks (no inverted or collapsed adjacent triangle).
fn smooth(
    points: &mut [Point],
    triangles: &[[usize; 3]],
    fixed: usize,
    domain: &DomainSpec,
    sweeps: usize,
) {
    let n = points.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut star: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ti, t) in triangles.iter().enumerate() {
        for k in 0..3 {
            let a = t[k];
            let b = t[(k + 1) % 3];
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
            }
            if !neighbors[b].contains(&a) {
                neighbors[b].push(a);
            }
            star[t[k]].push(ti);
        }
    }
    let area = |points: &[Point], t: &[usize; 3]| -> f64 {
        let a = points[t[0]];
        let b = points[t[1]];
        let c = points[t[2]];
        0.5 * (b - a).cross(c - a)
    };
    for _ in 0..sweeps {
        for i in fixed..n {
            if neighbors[i].is_empty() {
                continue;
            }
            let mut c = Point::new(0.0, 0.0);
            for &j in &neighbors[i] {
                c = c + points[j];
            }
            c = c / neighbors[i].len() as f64;
            let candidate = points[i] + (c - points[i]) * 0.7;
            if !domain.contains(candidate) {
                continue;
            }
            let old = points[i];
            let old_min = star[i]
                .iter()
                .map(|&ti| area(points, &triangles[ti]))
                .fold(f64::INFINITY, f64::min);
            points[i] = candidate;
            let new_min = star[i]
                .iter()
                .map(|&ti| area(points, &triangles[ti]))
                .fold(f64::INFINITY, f64::min);
            if new_min <= old_min.min(1e-12) {
                points[i] = old;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_rings_mesh_quality_and_containment() {
        let domain = DomainSpec::disk(Point::new(0.0, 0.0), 1.0);
        let mesh = build_domain_mesh(&domain, 0.1, MeshStrategy::Rings, None).unwrap();
        for v in &mesh.vertices {
            assert!(v.norm() <= 1.0 + 1e-9, "vertex outside disk: {v:?}");
        }
        assert!(!mesh.boundary_loop().is_empty());
        assert!(
            mesh.min_angle_deg() >= 20.0,
            "min angle {}",
            mesh.min_angle_deg()
        );
        assert!(
            mesh.max_edge_length() <= 1.5 * 0.1,
            "max edge {}",
            mesh.max_edge_length()
        );
    }

    #[test]
    fn disk_rings_mesh_is_mirror_symmetric() {
        let mesh = build_domain_mesh(
            &DomainSpec::disk(Point::new(0.0, 0.0), 1.0),
            0.2,
            MeshStrategy::Rings,
            None,
        )
        .unwrap();
        // Every vertex (x, y) has an exact partner (x, -y).
        for v in &mesh.vertices {
            let found = mesh
                .vertices
                .iter()
                .any(|w| w.x == v.x && w.y == -v.y);
            assert!(found, "no mirror partner for {v:?}");
        }
    }

    #[test]
    fn unit_square_mesh_area_is_exact() {
        let domain = DomainSpec::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let mesh = build_domain_mesh(&domain, 0.5, MeshStrategy::Lattice, None).unwrap();
        assert!(mesh.n_cells() >= 2);
        assert!(
            (mesh.total_area() - 1.0).abs() < 1e-9,
            "area {}",
            mesh.total_area()
        );
    }

    #[test]
    fn disk_area_error_shrinks_at_second_order() {
        let domain = DomainSpec::disk(Point::new(0.0, 0.0), 1.0);
        let pi = std::f64::consts::PI;
        let coarse = build_domain_mesh(&domain, 0.1, MeshStrategy::Rings, None).unwrap();
        let fine = build_domain_mesh(&domain, 0.05, MeshStrategy::Rings, None).unwrap();
        let e_coarse = (pi - coarse.total_area()).abs();
        let e_fine = (pi - fine.total_area()).abs();
        let ratio = e_coarse / e_fine;
        assert!(
            (2.8..=5.5).contains(&ratio),
            "expected ~4x error reduction, got {ratio} ({e_coarse} -> {e_fine})"
        );
    }

    #[test]
    fn lattice_disk_mesh_quality() {
        let domain = DomainSpec::disk(Point::new(0.0, 0.0), 1.0);
        let mesh = build_domain_mesh(&domain, 0.1, MeshStrategy::Lattice, None).unwrap();
        assert!(
            mesh.min_angle_deg() >= 20.0,
            "min angle {}",
            mesh.min_angle_deg()
        );
        assert!((mesh.total_area() - std::f64::consts::PI).abs() < 0.02);
    }

    #[test]
    fn conforming_mesh_marks_interface_edges() {
        let domain = DomainSpec::disk(Point::new(0.0, 0.0), 1.0);
        let shape = InclusionShape::disk(0.1, 0.0, 0.3);
        let mesh =
            build_domain_mesh(&domain, 0.08, MeshStrategy::Lattice, Some(&shape)).unwrap();
        assert!(!mesh.interface_edges.is_empty());
        // Interface nodes lie on the circle.
        for e in &mesh.interface_edges {
            for &v in e {
                let d = shape.signed_distance(mesh.vertices[v]);
                assert!(d.abs() < 1e-9, "interface node off the circle: {d}");
            }
        }
        assert!(mesh.min_angle_deg() >= 20.0, "min angle {}", mesh.min_angle_deg());
    }
}
