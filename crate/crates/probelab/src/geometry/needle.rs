//! Needles: polyline probes entering the domain from the boundary, with the
//! exact geometric impact-parameter oracle used to validate reconstructions.

use super::{DomainSpec, Point};
use crate::error::{Error, Result};
use crate::scenario::InclusionShape;
use serde::{Deserialize, Serialize};

/// A polyline probe c : [0, 1] -> closure of the domain, parameterized by
/// arclength; c(0) and c(1) lie on the boundary, the rest is interior.
#[derive(Debug, Clone)]
pub struct Needle {
    points: Vec<Point>,
    /// Cumulative arclength, `cum[0] = 0`, `cum[last] = length`.
    cum: Vec<f64>,
    length: f64,
}

impl Needle {
    pub fn new(points: Vec<Point>) -> Result<Needle> {
        if points.len() < 2 {
            return Err(Error::Geometry("needle needs at least 2 points".into()));
        }
        let mut cum = Vec::with_capacity(points.len());
        cum.push(0.0);
        for w in points.windows(2) {
            let d = w[0].dist(w[1]);
            if d == 0.0 {
                return Err(Error::Geometry(
                    "needle has coincident consecutive points".into(),
                ));
            }
            cum.push(cum.last().unwrap() + d);
        }
        let length = *cum.last().unwrap();
        Ok(Needle {
            points,
            cum,
            length,
        })
    }

    /// Check the boundary/interior invariants against the true domain.
    pub fn validate_against(&self, domain: &DomainSpec) -> Result<()> {
        let tol = 1e-9;
        for (label, p) in [("start", self.start()), ("end", self.end())] {
            if domain.distance_to_boundary(p) > tol {
                return Err(Error::Geometry(format!(
                    "needle {label} point ({}, {}) is not on the domain boundary",
                    p.x, p.y
                )));
            }
        }
        for p in &self.points[1..self.points.len() - 1] {
            if !domain.contains(*p) || domain.distance_to_boundary(*p) <= tol {
                return Err(Error::Geometry(format!(
                    "needle waypoint ({}, {}) is not strictly interior",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn vertices(&self) -> &[Point] {
        &self.points
    }

    /// Point at arclength-normalized parameter `t` in [0, 1].
    pub fn point_at(&self, t: f64) -> Point {
        let s = t.clamp(0.0, 1.0) * self.length;
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => self.points[i],
            Err(i) => {
                let i = i.clamp(1, self.points.len() - 1);
                let seg = self.cum[i] - self.cum[i - 1];
                let u = (s - self.cum[i - 1]) / seg;
                self.points[i - 1] + (self.points[i] - self.points[i - 1]) * u
            }
        }
    }

    /// The polyline {c(t') : 0 <= t' <= t}.
    pub fn tail_polyline(&self, t: f64) -> Vec<Point> {
        let s = t.clamp(0.0, 1.0) * self.length;
        let mut out = vec![self.points[0]];
        for i in 1..self.points.len() {
            if self.cum[i] < s {
                out.push(self.points[i]);
            } else {
                out.push(self.point_at(t));
                break;
            }
        }
        if out.len() == 1 {
            out.push(self.point_at(t));
        }
        out
    }

    /// Insert midpoints on every segment; the geometry (and therefore the
    /// arclength parameterization) is unchanged.
    pub fn refined(&self) -> Needle {
        let mut pts = Vec::with_capacity(self.points.len() * 2 - 1);
        for i in 0..self.points.len() - 1 {
            pts.push(self.points[i]);
            pts.push((self.points[i] + self.points[i + 1]) / 2.0);
        }
        pts.push(*self.points.last().unwrap());
        Needle::new(pts).expect("refinement preserves validity")
    }
}

pub fn dist_point_polyline(p: Point, poly: &[Point]) -> f64 {
    if poly.len() == 1 {
        return p.dist(poly[0]);
    }
    let mut d = f64::INFINITY;
    for w in poly.windows(2) {
        d = d.min(super::dist_point_segment(p, w[0], w[1]));
    }
    d
}

/// Fan description: `count` needles anchored on one boundary arc, shooting
/// toward a target arc, optionally routed through fixed interior waypoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FanSpec {
    /// Anchor arc (radians about the domain center); a point when equal.
    pub anchor_theta0: f64,
    pub anchor_theta1: f64,
    /// Target arc for the far endpoints.
    pub target_theta0: f64,
    pub target_theta1: f64,
    pub count: usize,
    /// Interior waypoints inserted between anchor and target, shared by all
    /// needles in the fan.
    #[serde(default)]
    pub waypoints: Vec<Point>,
}

impl FanSpec {
    /// A single diameter-like needle from angle `theta` to its antipode.
    pub fn diameter(theta: f64) -> FanSpec {
        FanSpec {
            anchor_theta0: theta,
            anchor_theta1: theta,
            target_theta0: theta + std::f64::consts::PI,
            target_theta1: theta + std::f64::consts::PI,
            count: 1,
            waypoints: Vec::new(),
        }
    }

    /// `count` chords from a single boundary point, sweeping the far side.
    pub fn chords_from_point(theta: f64, count: usize) -> FanSpec {
        let pi = std::f64::consts::PI;
        FanSpec {
            anchor_theta0: theta,
            anchor_theta1: theta,
            target_theta0: theta + 0.25 * pi,
            target_theta1: theta + 1.75 * pi,
            count,
            waypoints: Vec::new(),
        }
    }

    /// `count` needles whose anchors sweep the whole boundary, each shooting
    /// roughly across the domain.  Approach directions vary with index so
    /// that first-touch points cover an interior inclusion from all sides.
    pub fn full_scan(count: usize) -> FanSpec {
        let tau = std::f64::consts::TAU;
        FanSpec {
            anchor_theta0: 0.0,
            anchor_theta1: tau * (1.0 - 1.0 / count.max(1) as f64),
            target_theta0: std::f64::consts::PI - 1.0,
            target_theta1: std::f64::consts::PI + 1.0,
            count,
            waypoints: Vec::new(),
        }
    }
}

/// Generate the fan.  Targets are swept across the target arc relative to
/// each needle's anchor; degenerate chords (endpoints closer than 0.2 rad)
/// are nudged apart.
pub fn needle_family(domain: &DomainSpec, spec: &FanSpec) -> Result<Vec<Needle>> {
    if spec.count == 0 {
        return Err(Error::InvalidInput("fan count must be >= 1".into()));
    }
    let tau = std::f64::consts::TAU;
    let frac = |i: usize| {
        if spec.count == 1 {
            0.5
        } else {
            i as f64 / (spec.count - 1) as f64
        }
    };
    let mut needles = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let f = frac(i);
        let anchor_th = spec.anchor_theta0 + (spec.anchor_theta1 - spec.anchor_theta0) * f;
        // Point anchor: sweep the target arc absolutely.  Spread anchors:
        // the target arc is read as per-anchor offsets.
        let mut target_th = if spec.anchor_theta0 == spec.anchor_theta1 {
            spec.target_theta0 + (spec.target_theta1 - spec.target_theta0) * f
        } else {
            let offset0 = spec.target_theta0 - spec.anchor_theta0;
            let offset1 = spec.target_theta1 - spec.anchor_theta1;
            anchor_th + offset0 + (offset1 - offset0) * f
        };
        let mut sep = (target_th - anchor_th).rem_euclid(tau);
        if sep > std::f64::consts::PI {
            sep = tau - sep;
        }
        if sep < 0.2 {
            target_th += 0.25;
        }
        let a = domain.boundary_point(anchor_th);
        let b = domain.boundary_point(target_th);
        let mut pts = vec![a];
        pts.extend_from_slice(&spec.waypoints);
        pts.push(b);
        let needle = Needle::new(pts)?;
        needle.validate_against(domain)?;
        needles.push(needle);
    }
    Ok(needles)
}

/// Arclength-normalized first parameter at which the needle touches the
/// closure of the inclusion, per the sup formula; 1 when it never does.
pub fn impact_parameter_oracle(needle: &Needle, inclusion: Option<&InclusionShape>) -> f64 {
    let shape = match inclusion {
        Some(s) => s,
        None => return 1.0,
    };
    let pts = needle.vertices();
    for i in 0..pts.len() - 1 {
        let (p, q) = (pts[i], pts[i + 1]);
        if let Some(s) = first_touch_on_segment(p, q, shape) {
            let arc = needle.cum[i] + s * p.dist(q);
            return arc / needle.length();
        }
    }
    1.0
}

/// Smallest s in [0, 1] with p + s (q - p) in the closure of the shape.
fn first_touch_on_segment(p: Point, q: Point, shape: &InclusionShape) -> Option<f64> {
    match shape {
        InclusionShape::Disk { center, radius } => {
            let d = q - p;
            let f = p - *center;
            if f.norm() <= *radius {
                return Some(0.0);
            }
            let a = d.norm_sq();
            let b = 2.0 * f.dot(d);
            let c = f.norm_sq() - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let s = (-b - disc.sqrt()) / (2.0 * a);
            if (0.0..=1.0).contains(&s) {
                Some(s)
            } else {
                None
            }
        }
        InclusionShape::Polygon { vertices } => {
            if shape.signed_distance(p) <= 0.0 {
                return Some(0.0);
            }
            let n = vertices.len();
            let d = q - p;
            let mut best: Option<f64> = None;
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let e = b - a;
                let denom = d.cross(e);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let s = (a - p).cross(e) / denom;
                let u = (a - p).cross(d) / denom;
                if (0.0..=1.0).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&u) {
                    best = Some(best.map_or(s, |b: f64| b.min(s)));
                }
            }
            best
        }
    }
}
