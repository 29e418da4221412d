//! Phantom definition: background conductivity, inclusion shape, and the
//! conductivity inside the inclusion, with admissibility validation.
//!
//! A scenario is declarative data: coefficient fields are constants, radial
//! profiles, or parsed arithmetic expressions, so a phantom can live in a
//! config file and round-trip through serialization.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Point;
use serde::{Deserialize, Serialize};

/// Scalar coefficient field over the closed domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CoefficientField {
    Constant(f64),
    /// Profile in the distance `r` from `center`.
    Radial { center: Point, profile: Expr },
    /// Expression in `x`, `y`.
    Expression(Expr),
}

impl CoefficientField {
    pub fn constant(v: f64) -> Self {
        CoefficientField::Constant(v)
    }

    pub fn expression(src: &str) -> Result<Self> {
        Ok(CoefficientField::Expression(Expr::parse(src)?))
    }

    pub fn radial(center: Point, profile: &str) -> Result<Self> {
        Ok(CoefficientField::Radial {
            center,
            profile: Expr::parse_radial(profile)?,
        })
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        match self {
            CoefficientField::Constant(v) => Ok(*v),
            CoefficientField::Radial { center, profile } => {
                let r = (p - *center).norm();
                profile.eval(r, 0.0)
            }
            CoefficientField::Expression(e) => e.eval(p.x, p.y),
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            CoefficientField::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

/// Shape of the inclusion: a disk or a simple polygon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InclusionShape {
    Disk { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
}

impl InclusionShape {
    pub fn disk(cx: f64, cy: f64, radius: f64) -> Self {
        InclusionShape::Disk {
            center: Point::new(cx, cy),
            radius,
        }
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        if crate::geometry::polygon_self_intersects(&vertices) {
            return Err(Error::Geometry("self-intersecting polygon".into()));
        }
        Ok(InclusionShape::Polygon { vertices })
    }

    /// Signed distance to the shape boundary, negative inside.  Exact for
    /// disks; exact edge distance for polygons.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match self {
            InclusionShape::Disk { center, radius } => (p - *center).norm() - radius,
            InclusionShape::Polygon { vertices } => {
                let mut d = f64::INFINITY;
                let n = vertices.len();
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    d = d.min(crate::geometry::dist_point_segment(p, a, b));
                }
                if crate::geometry::point_in_polygon(p, vertices) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Closure membership; boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        self.signed_distance(p) <= 0.0
    }

    /// `count` points spread along the shape boundary.
    pub fn boundary_samples(&self, count: usize) -> Vec<Point> {
        match self {
            InclusionShape::Disk { center, radius } => (0..count)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    Point::new(center.x + radius * th.cos(), center.y + radius * th.sin())
                })
                .collect(),
            InclusionShape::Polygon { vertices } => {
                let n = vertices.len();
                let mut lens = Vec::with_capacity(n);
                let mut total = 0.0;
                for i in 0..n {
                    let l = (vertices[(i + 1) % n] - vertices[i]).norm();
                    lens.push(l);
                    total += l;
                }
                (0..count)
                    .map(|k| {
                        let mut s = total * k as f64 / count as f64;
                        for i in 0..n {
                            if s <= lens[i] || i == n - 1 {
                                let dir = (vertices[(i + 1) % n] - vertices[i]) / lens[i];
                                return vertices[i] + dir * s;
                            }
                            s -= lens[i];
                        }
                        vertices[0]
                    })
                    .collect()
            }
        }
    }

    /// Outward unit normal at a boundary point (nearest-feature normal).
    pub fn outward_normal(&self, p: Point) -> Point {
        match self {
            InclusionShape::Disk { center, .. } => {
                let d = p - *center;
                let n = d.norm();
                if n == 0.0 {
                    Point::new(1.0, 0.0)
                } else {
                    d / n
                }
            }
            InclusionShape::Polygon { vertices } => {
                // Normal of the nearest edge, oriented by the signed area.
                let n = vertices.len();
                let mut best = (f64::INFINITY, Point::new(1.0, 0.0));
                let ccw = crate::geometry::polygon_signed_area(vertices) > 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let d = crate::geometry::dist_point_segment(p, a, b);
                    if d < best.0 {
                        let e = b - a;
                        let len = e.norm().max(1e-300);
                        let nor = if ccw {
                            Point::new(e.y / len, -e.x / len)
                        } else {
                            Point::new(-e.y / len, e.x / len)
                        };
                        best = (d, nor);
                    }
                }
                best.1
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            InclusionShape::Disk { radius, .. } => 2.0 * radius,
            InclusionShape::Polygon { vertices } => {
                let mut d: f64 = 0.0;
                for i in 0..vertices.len() {
                    for j in i + 1..vertices.len() {
                        d = d.max((vertices[i] - vertices[j]).norm());
                    }
                }
                d
            }
        }
    }
}

/// A conductivity phantom: background `gamma0`, optional inclusion `D`, and
/// the conductivity `gamma_inside` on `D`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConductivityScenario {
    pub gamma0: CoefficientField,
    pub inclusion: Option<InclusionShape>,
    pub gamma_inside: CoefficientField,
}

impl ConductivityScenario {
    /// Background-only scenario (null phantom).
    pub fn background(gamma0: CoefficientField) -> Self {
        ConductivityScenario {
            gamma0: gamma0.clone(),
            inclusion: None,
            gamma_inside: gamma0,
        }
    }

    pub fn with_inclusion(
        gamma0: CoefficientField,
        inclusion: InclusionShape,
        gamma_inside: CoefficientField,
    ) -> Self {
        ConductivityScenario {
            gamma0,
            inclusion: Some(inclusion),
            gamma_inside,
        }
    }

    /// Conductivity at a point.  Points on the inclusion boundary resolve to
    /// the inside value (a fixed measure-zero convention).
    pub fn eval(&self, p: Point) -> Result<f64> {
        match &self.inclusion {
            Some(d) if d.contains(p) => self.gamma_inside.eval(p),
            _ => self.gamma0.eval(p),
        }
    }

    pub fn has_inclusion(&self) -> bool {
        self.inclusion.is_some()
    }
}

/// One sampled point on the inclusion boundary in an admissibility report.
#[derive(Debug, Clone, Serialize)]
pub struct JumpSample {
    pub point: Point,
    pub sign: i8,
    pub min_magnitude: f64,
}

/// Outcome of [`validate_admissibility`].
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// Sampled lower bound of the conductivity over the domain grid.
    pub min_value: f64,
    /// Sampled upper bound.
    pub max_value: f64,
    pub positivity_ok: bool,
    /// Per boundary point jump diagnostics; empty when there is no inclusion.
    pub jump_samples: Vec<JumpSample>,
    pub jump_ok: bool,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Validate uniform positivity of the coefficients and the sign condition of
/// the jump across the inclusion boundary, by nested-grid sampling.
///
/// `sample_density` controls both the domain grid (density x density) and the
/// number of inclusion-boundary probes (`max(64, density)`).  Grids are
/// nested under doubling, so a failure found at density `d` persists at `2d`.
pub fn validate_admissibility(
    scenario: &ConductivityScenario,
    domain: &crate::geometry::DomainSpec,
    sample_density: usize,
) -> Result<AdmissibilityReport> {
    if sample_density < 16 {
        return Err(Error::InvalidInput(
            "sample_density must be at least 16".into(),
        ));
    }
    let mut failures = Vec::new();
    let (lo, hi) = domain.bounding_box();
    let n = sample_density;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let p = Point::new(
                lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                lo.y + (hi.y - lo.y) * j as f64 / n as f64,
            );
            if !domain.contains(p) {
                continue;
            }
            match scenario.eval(p) {
                Ok(v) => {
                    min_v = min_v.min(v);
                    max_v = max_v.max(v);
                }
                Err(e) => {
                    failures.push(format!("evaluation failed at ({}, {}): {e}", p.x, p.y));
                    min_v = f64::NEG_INFINITY;
                }
            }
        }
    }
    let positivity_ok = min_v > 0.0 && max_v.is_finite();
    if !positivity_ok {
        failures.push(format!(
            "positivity violated: sampled range [{min_v}, {max_v}]"
        ));
    }

    let mut jump_samples = Vec::new();
    let mut jump_ok = true;
    if let Some(shape) = &scenario.inclusion {
        // Closure inside the domain with positive margin.
        for q in shape.boundary_samples(128) {
            if !domain.contains(q) || domain.distance_to_boundary(q) < 1e-9 {
                failures.push("inclusion closure not contained in the domain interior".into());
                jump_ok = false;
                break;
            }
        }
        let n_bd = sample_density.max(64);
        let delta = (shape.diameter() / 16.0).max(1e-6);
        let radial = 8;
        for a in shape.boundary_samples(n_bd) {
            let nrm = shape.outward_normal(a);
            let mut sign = 0i8;
            let mut min_mag = f64::INFINITY;
            let mut ok = true;
            for k in 1..=radial {
                let depth = delta * k as f64 / radial as f64;
                let p = a - nrm * depth;
                if shape.signed_distance(p) >= 0.0 {
                    continue; // stepped out of D (thin shapes); skip
                }
                let gi = scenario.gamma_inside.eval(p);
                let g0 = scenario.gamma0.eval(p);
                let (gi, g0) = match (gi, g0) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => {
                        ok = false;
                        break;
                    }
                };
                let jump = gi - g0;
                let s = if jump > 0.0 { 1 } else { -1 };
                if sign == 0 {
                    sign = s;
                } else if sign != s {
                    ok = false;
                }
                min_mag = min_mag.min(jump.abs());
            }
            if !ok || sign == 0 || min_mag <= 1e-12 {
                jump_ok = false;
                failures.push(format!(
                    "jump condition violated near boundary point ({:.6}, {:.6})",
                    a.x, a.y
                ));
            }
            jump_samples.push(JumpSample {
                point: a,
                sign,
                min_magnitude: if min_mag.is_finite() { min_mag } else { 0.0 },
            });
        }
    }

    let pass = positivity_ok && jump_ok;
    Ok(AdmissibilityReport {
        min_value: min_v,
        max_value: max_v,
        positivity_ok,
        jump_samples,
        jump_ok,
        pass,
        failures,
    })
}
