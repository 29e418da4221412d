//! Bowyer-Watson Delaunay triangulation of a planar point set.
//!
//! Incremental insertion into a super-triangle with walk-based point
//! location.  Input points are expected to be jittered enough to avoid exact
//! cocircularity; the in-circle predicate breaks near-ties deterministically.

use super::Point;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    /// Neighbor across the edge opposite vertex k, usize::MAX for none.
    n: [usize; 3],
    alive: bool,
}

pub struct Delaunay {
    points: Vec<Point>,
    tris: Vec<Tri>,
    last_alive: usize,
}

const NONE: usize = usize::MAX;

impl Delaunay {
    /// Triangulate `points`.  Returns triangles as CCW index triples.
    pub fn triangulate(points: &[Point]) -> Vec<[usize; 3]> {
        assert!(points.len() >= 3, "need at least 3 points");
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        let mid = (lo + hi) / 2.0;
        let m = 20.0 * span;
        let n = points.len();
        let mut all = points.to_vec();
        all.push(Point::new(mid.x - m, mid.y - m));
        all.push(Point::new(mid.x + m, mid.y - m));
        all.push(Point::new(mid.x, mid.y + m));

        let mut d = Delaunay {
            points: all,
            tris: vec![Tri {
                v: [n, n + 1, n + 2],
                n: [NONE, NONE, NONE],
                alive: true,
            }],
            last_alive: 0,
        };
        for i in 0..n {
            d.insert(i);
        }
        let mut out = Vec::new();
        for t in &d.tris {
            if t.alive && t.v.iter().all(|&v| v < n) {
                out.push(t.v);
            }
        }
        out
    }

    fn orient(a: Point, b: Point, c: Point) -> f64 {
        (b - a).cross(c - a)
    }

    fn in_circumcircle(&self, t: &Tri, p: Point) -> bool {
        let a = self.points[t.v[0]];
        let b = self.points[t.v[1]];
        let c = self.points[t.v[2]];
        // CCW orientation is maintained by construction.
        let adx = a.x - p.x;
        let ady = a.y - p.y;
        let bdx = b.x - p.x;
        let bdy = b.y - p.y;
        let cdx = c.x - p.x;
        let cdy = c.y - p.y;
        let alift = adx * adx + ady * ady;
        let blift = bdx * bdx + bdy * bdy;
        let clift = cdx * cdx + cdy * cdy;
        let det = adx * (bdy * clift - cdy * blift) - ady * (bdx * clift - cdx * blift)
            + alift * (bdx * cdy - cdx * bdy);
        det > 0.0
    }

    fn contains(&self, ti: usize, p: Point) -> bool {
        let t = &self.tris[ti];
        let a = self.points[t.v[0]];
        let b = self.points[t.v[1]];
        let c = self.points[t.v[2]];
        let eps = -1e-14;
        Self::orient(a, b, p) >= eps && Self::orient(b, c, p) >= eps && Self::orient(c, a, p) >= eps
    }

    /// Walk from the last touched triangle toward `p`.
    fn locate(&self, p: Point) -> usize {
        let mut cur = self.last_alive;
        if !self.tris[cur].alive {
            cur = (0..self.tris.len())
                .rev()
                .find(|&i| self.tris[i].alive)
                .expect("no alive triangle");
        }
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > 4 * self.tris.len() + 16 {
                // Fallback: exhaustive scan (degenerate walk cycle).
                return (0..self.tris.len())
                    .find(|&i| self.tris[i].alive && self.contains(i, p))
                    .expect("point not inside any triangle");
            }
            let t = self.tris[cur];
            let a = self.points[t.v[0]];
            let b = self.points[t.v[1]];
            let c = self.points[t.v[2]];
            // Step through the edge the point is outside of.
            if Self::orient(a, b, p) < 0.0 && t.n[2] != NONE {
                cur = t.n[2];
                continue;
            }
            if Self::orient(b, c, p) < 0.0 && t.n[0] != NONE {
                cur = t.n[0];
                continue;
            }
            if Self::orient(c, a, p) < 0.0 && t.n[1] != NONE {
                cur = t.n[1];
                continue;
            }
            return cur;
        }
    }

    fn insert(&mut self, pi: usize) {
        let p = self.points[pi];
        let seed = self.locate(p);

        // Seed set: the containing triangle plus, when p sits (numerically)
        // on one of its edges, the neighbor across that edge.  Collinear
        // boundary chains on polygon edges hit this case.
        let mut seeds = vec![seed];
        {
            let t = self.tris[seed];
            for k in 0..3 {
                let a = self.points[t.v[(k + 1) % 3]];
                let b = self.points[t.v[(k + 2) % 3]];
                let scale = (b - a).norm() * ((p - a).norm() + (p - b).norm()).max(1e-300);
                if Self::orient(a, b, p).abs() <= 1e-12 * scale && t.n[k] != NONE {
                    seeds.push(t.n[k]);
                }
            }
        }

        // Grow the cavity of triangles whose circumcircle contains p.
        let mut cavity = Vec::new();
        let mut stack = seeds.clone();
        let mut in_cavity = std::collections::HashSet::new();
        while let Some(ti) = stack.pop() {
            if !self.tris[ti].alive || in_cavity.contains(&ti) {
                continue;
            }
            let forced = seeds.contains(&ti);
            if forced || self.in_circumcircle(&self.tris[ti].clone(), p) {
                in_cavity.insert(ti);
                cavity.push(ti);
                for k in 0..3 {
                    let nb = self.tris[ti].n[k];
                    if nb != NONE {
                        stack.push(nb);
                    }
                }
            }
        }

        // Boundary of the cavity: edges whose neighbor is outside it.
        // Each is (va, vb, outside-neighbor).
        let mut border = Vec::new();
        for &ti in &cavity {
            let t = self.tris[ti];
            for k in 0..3 {
                let nb = t.n[k];
                if nb == NONE || !in_cavity.contains(&nb) {
                    let va = t.v[(k + 1) % 3];
                    let vb = t.v[(k + 2) % 3];
                    border.push((va, vb, nb));
                }
            }
        }
        for &ti in &cavity {
            self.tris[ti].alive = false;
        }

        // Retriangulate the star of p.
        let base = self.tris.len();
        for (idx, &(va, vb, nb)) in border.iter().enumerate() {
            let mut v = [pi, va, vb];
            let a = self.points[v[0]];
            let b = self.points[v[1]];
            let c = self.points[v[2]];
            if Self::orient(a, b, c) < 0.0 {
                v.swap(1, 2);
            }
            self.tris.push(Tri {
                v,
                n: [nb, NONE, NONE],
                alive: true,
            });
            // Fix the outside neighbor's back-pointer.
            if nb != NONE {
                let tnb = &mut self.tris[nb];
                for k in 0..3 {
                    let wa = tnb.v[(k + 1) % 3];
                    let wb = tnb.v[(k + 2) % 3];
                    if (wa == va && wb == vb) || (wa == vb && wb == va) {
                        tnb.n[k] = base + idx;
                    }
                }
            }
        }
        // Link the new star triangles to each other through edges containing p.
        // Map: other vertex -> (triangle, slot)
        let mut half: std::collections::HashMap<(usize, usize), (usize, usize)> =
            std::collections::HashMap::new();
        for ti in base..self.tris.len() {
            let t = self.tris[ti];
            for k in 0..3 {
                let va = t.v[(k + 1) % 3];
                let vb = t.v[(k + 2) % 3];
                if va == pi || vb == pi {
                    if let Some(&(tj, kj)) = half.get(&(vb, va)) {
                        self.tris[ti].n[k] = tj;
                        self.tris[tj].n[kj] = ti;
                    } else {
                        half.insert((va, vb), (ti, k));
                    }
                }
            }
        }
        self.last_alive = self.tris.len() - 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_delaunay(points: &[Point], tris: &[[usize; 3]]) {
        for t in tris {
            let a = points[t[0]];
            let b = points[t[1]];
            let c = points[t[2]];
            assert!(Delaunay::orient(a, b, c) > 0.0, "triangle not CCW");
            for (i, p) in points.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                let d = {
                    let adx = a.x - p.x;
                    let ady = a.y - p.y;
                    let bdx = b.x - p.x;
                    let bdy = b.y - p.y;
                    let cdx = c.x - p.x;
                    let cdy = c.y - p.y;
                    let alift = adx * adx + ady * ady;
                    let blift = bdx * bdx + bdy * bdy;
                    let clift = cdx * cdx + cdy * cdy;
                    adx * (bdy * clift - cdy * blift) - ady * (bdx * clift - cdx * blift)
                        + alift * (bdx * cdy - cdx * bdy)
                };
                assert!(
                    d <= 1e-9,
                    "point {i} strictly inside circumcircle of {t:?} (det {d})"
                );
            }
        }
    }

    #[test]
    fn triangulates_square_grid_with_jitter() {
        let mut points = Vec::new();
        let mut state = 12345u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 12) as f64 / (1u64 << 52) as f64 - 0.5
        };
        for i in 0..8 {
            for j in 0..8 {
                points.push(Point::new(
                    i as f64 + 0.01 * rng(),
                    j as f64 + 0.01 * rng(),
                ));
            }
        }
        let tris = Delaunay::triangulate(&points);
        // Euler: for a triangulated convex-ish cloud, T ~ 2n - 2 - b
        assert!(tris.len() > 80, "too few triangles: {}", tris.len());
        check_delaunay(&points, &tris);
        // Total area equals convex hull area (~49 for jittered unit grid)
        let area: f64 = tris
            .iter()
            .map(|t| {
                let a = points[t[0]];
                let b = points[t[1]];
                let c = points[t[2]];
                0.5 * (b - a).cross(c - a)
            })
            .sum();
        assert!((area - 49.0).abs() < 1.0, "area {area}");
    }

    #[test]
    fn triangulates_circle_points() {
        let mut points = vec![Point::new(0.0, 0.0)];
        for k in 0..24 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
            points.push(Point::new(th.cos(), th.sin()));
        }
        let tris = Delaunay::triangulate(&points);
        check_delaunay(&points, &tris);
        let area: f64 = tris
            .iter()
            .map(|t| {
                let a = points[t[0]];
                let b = points[t[1]];
                let c = points[t[2]];
                0.5 * (b - a).cross(c - a)
            })
            .sum();
        // polygon area of regular 24-gon = 0.5 * n * sin(2 pi / n)
        let poly = 0.5 * 24.0 * (2.0 * std::f64::consts::PI / 24.0).sin();
        assert!((area - poly).abs() < 1e-9);
    }
}
