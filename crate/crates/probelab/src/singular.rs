//! Singular solutions of the background equation: frozen-coefficient
//! fundamental solution centered at an interior pole, plus a finite-element
//! correction that restores the divergence-form equation for variable
//! backgrounds.  For constant backgrounds the correction vanishes
//! identically.

use crate::error::{Error, Result};
use crate::fem::{energy_product, DiscreteField, ForwardSolver};
use crate::geometry::{Mesh2D, Point};
use crate::scenario::CoefficientField;

/// Value and gradient of the 2D fundamental solution -log|z| / (2 pi g) of
/// the operator div(g grad .) with constant g: the flux of g grad through
/// any circle around the pole is -1.
pub fn fundamental_2d(z: Point, gamma_at_pole: f64) -> Result<(f64, Point)> {
    let r2 = z.norm_sq();
    if r2 == 0.0 {
        return Err(Error::InvalidInput(
            "fundamental solution evaluated at its pole".into(),
        ));
    }
    let c = 1.0 / (2.0 * std::f64::consts::PI * gamma_at_pole);
    let value = -0.5 * r2.ln() * c;
    let gradient = z * (-c / r2);
    Ok((value, gradient))
}

/// 7-point degree-5 triangle quadrature (barycentric coordinates, weights
/// summing to one).
const QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [0.059715871789770, 0.470142064105115, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.059715871789770, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
        0.132394152788506,
    ),
    (
        [0.797426985353087, 0.101286507323456, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.797426985353087, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
        0.125939180544827,
    ),
];

/// A singular background solution: closed-form part centered at `pole`
/// (frozen coefficient `gamma_at_pole`) plus the nodal correction field.
#[derive(Debug, Clone)]
pub struct SingularSolution {
    pub pole: Point,
    pub gamma_at_pole: f64,
    /// Correction, zero on the outer boundary; identically zero for
    /// constant backgrounds.
    pub correction: DiscreteField,
    /// H1 norm of the correction.
    pub correction_h1: f64,
}

impl SingularSolution {
    pub fn closed_value(&self, y: Point) -> Result<f64> {
        Ok(fundamental_2d(y - self.pole, self.gamma_at_pole)?.0)
    }

    pub fn closed_gradient(&self, y: Point) -> Result<Point> {
        Ok(fundamental_2d(y - self.pole, self.gamma_at_pole)?.1)
    }

    /// Nodal interpolant of the full singular solution.  Finite everywhere
    /// because the pole sits at a cell centroid, never at a vertex.
    pub fn nodal_field(&self, mesh: &Mesh2D) -> DiscreteField {
        let mut values = Vec::with_capacity(mesh.n_vertices());
        for (i, &p) in mesh.vertices.iter().enumerate() {
            let closed = self
                .closed_value(p)
                .expect("vertex coincides with snapped pole");
            values.push(closed + self.correction.values[i]);
        }
        DiscreteField { values }
    }

    /// Per-cell gradients (closed-form gradient at the centroid plus the P1
    /// gradient of the correction) over the given cells.
    pub fn gradient_on_cells(&self, mesh: &Mesh2D, cells: &[usize]) -> Result<Vec<Point>> {
        let h = mesh.h;
        let mut out = Vec::with_capacity(cells.len());
        for &c in cells {
            let centroid = mesh.cell_centroid(c);
            if centroid.dist(self.pole) < h {
                return Err(Error::InvalidInput(format!(
                    "cell {c} is within one mesh width of the pole"
                )));
            }
            let g = self.closed_gradient(centroid)?;
            out.push(g + self.correction.cell_gradient(mesh, c));
        }
        Ok(out)
    }
}

/// Snap a requested pole to the nearest cell centroid.
pub fn snap_to_centroid(mesh: &Mesh2D, x: Point) -> (usize, Point) {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..mesh.n_cells() {
        let d = mesh.cell_centroid(c).dist(x);
        if d < best.1 {
            best = (c, d);
        }
    }
    (best.0, mesh.cell_centroid(best.0))
}

/// Construct the singular solution for the background solver at pole `x`.
///
/// The correction solves the zero-boundary problem whose load pairs the
/// coefficient deviation `gamma0(pole) - gamma0(y)` against the closed-form
/// gradient; the load integrand is integrable at the pole, and quadrature
/// points within h/2 of the pole are dropped (their contribution is
/// O(h^{1+theta})).
pub fn build_corrected_singular(
    solver: &ForwardSolver,
    gamma0: &CoefficientField,
    x: Point,
) -> Result<SingularSolution> {
    let mesh = solver.mesh;
    let h = mesh.h;
    let near_boundary = mesh
        .boundary_loop()
        .iter()
        .map(|&b| mesh.vertices[b].dist(x))
        .fold(f64::INFINITY, f64::min);
    if near_boundary < 2.0 * h {
        return Err(Error::InvalidInput(format!(
            "pole ({}, {}) is within 2h of the outer boundary",
            x.x, x.y
        )));
    }
    let (_, pole) = snap_to_centroid(mesh, x);
    let gamma_at_pole = gamma0.eval(pole)?;

    if gamma0.is_constant().is_some() {
        return Ok(SingularSolution {
            pole,
            gamma_at_pole,
            correction: DiscreteField::zeros(mesh.n_vertices()),
            correction_h1: 0.0,
        });
    }

    // Load: f(phi_i) = int (g(pole) - g(y)) grad G0(y - pole) . grad phi_i.
    let mut load = vec![0.0; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        let t = mesh.triangles[c];
        let grads = mesh.cell_gradients(c);
        let area = mesh.cell_area(c);
        let va = mesh.vertices[t[0]];
        let vb = mesh.vertices[t[1]];
        let vc = mesh.vertices[t[2]];
        let mut cell_integral = Point::new(0.0, 0.0);
        for (bary, w) in QUAD7 {
            let y = va * bary[0] + vb * bary[1] + vc * bary[2];
            if y.dist(pole) < 0.5 * h {
                continue;
            }
            let dev = gamma_at_pole - gamma0.eval(y)?;
            let (_, grad) = fundamental_2d(y - pole, gamma_at_pole)?;
            cell_integral = cell_integral + grad * (dev * w);
        }
        cell_integral = cell_integral * area;
        for k in 0..3 {
            load[t[k]] += cell_integral.dot(grads[k]);
        }
    }
    let correction = solver.solve_load(&load)?;
    let correction_h1 = {
        let ones = vec![1.0; mesh.n_cells()];
        let semi = energy_product(mesh, &ones, &correction, &correction);
        let mass = crate::fem::assemble_mass(mesh);
        let mut mv = vec![0.0; mesh.n_vertices()];
        mass.matvec(&correction.values, &mut mv);
        let l2: f64 = correction
            .values
            .iter()
            .zip(mv.iter())
            .map(|(a, b)| a * b)
            .sum();
        (semi + l2).sqrt()
    };
    Ok(SingularSolution {
        pole,
        gamma_at_pole,
        correction,
        correction_h1,
    })
}

/// Residual of discrete harmonicity against hat test functions centered at
/// least `margin` away from the pole: quadrature of the closed-form part
/// plus the exact P1 energy of the correction.
pub fn harmonicity_residual(
    solver: &ForwardSolver,
    gamma0: &CoefficientField,
    sol: &SingularSolution,
    margin: f64,
) -> Result<f64> {
    let mesh = solver.mesh;
    let mut pairing = vec![0.0; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        let t = mesh.triangles[c];
        let grads = mesh.cell_gradients(c);
        let area = mesh.cell_area(c);
        let va = mesh.vertices[t[0]];
        let vb = mesh.vertices[t[1]];
        let vc = mesh.vertices[t[2]];
        // closed-form part with pointwise gamma at quadrature nodes
        let mut acc = Point::new(0.0, 0.0);
        for (bary, w) in QUAD7 {
            let y = va * bary[0] + vb * bary[1] + vc * bary[2];
            if y.dist(sol.pole) < 1e-12 {
                continue;
            }
            let g = gamma0.eval(y)?;
            let (_, grad) = fundamental_2d(y - sol.pole, sol.gamma_at_pole)?;
            acc = acc + grad * (g * w);
        }
        acc = acc * area;
        // correction part, also with pointwise gamma (mean over the rule),
        // so the load cancellation is not built in
        let mut gmean = 0.0;
        for (bary, w) in QUAD7 {
            let y = va * bary[0] + vb * bary[1] + vc * bary[2];
            gmean += gamma0.eval(y)? * w;
        }
        let ge = sol.correction.cell_gradient(mesh, c);
        for k in 0..3 {
            pairing[t[k]] += acc.dot(grads[k]) + gmean * ge.dot(grads[k]) * area;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..mesh.n_vertices() {
        if mesh.is_boundary_node(i) {
            continue;
        }
        if mesh.vertices[i].dist(sol.pole) < margin {
            continue;
        }
        worst = worst.max(pairing[i].abs());
    }
    Ok(worst)
}

/// Flux of gamma grad(sol) through a contour around the pole, computed by
/// pairing with a radial cutoff that is 1 inside `r_in` and 0 outside
/// `r_out`; equals -(-1) = 1 for a unit point source.
pub fn pole_flux_check(
    solver: &ForwardSolver,
    gamma0: &CoefficientField,
    sol: &SingularSolution,
    r_in: f64,
    r_out: f64,
) -> Result<f64> {
    let mesh = solver.mesh;
    let cutoff = |p: Point| -> f64 {
        let r = p.dist(sol.pole);
        ((r_out - r) / (r_out - r_in)).clamp(0.0, 1.0)
    };
    let chi = DiscreteField::from_fn(mesh, cutoff);
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let gchi = chi.cell_gradient(mesh, c);
        if gchi.norm_sq() == 0.0 {
            continue;
        }
        let t = mesh.triangles[c];
        let area = mesh.cell_area(c);
        let va = mesh.vertices[t[0]];
        let vb = mesh.vertices[t[1]];
        let vc = mesh.vertices[t[2]];
        for (bary, w) in QUAD7 {
            let y = va * bary[0] + vb * bary[1] + vc * bary[2];
            let g = gamma0.eval(y)?;
            let (_, grad) = fundamental_2d(y - sol.pole, sol.gamma_at_pole)?;
            acc += g * grad.dot(gchi) * w * area;
        }
        let gc = solver.cell_gamma[c];
        let ge = sol.correction.cell_gradient(mesh, c);
        acc += gc * ge.dot(gchi) * area;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain_mesh, DomainSpec, MeshStrategy};

    fn disk_mesh(h: f64) -> Mesh2D {
        build_domain_mesh(
            &DomainSpec::disk(Point::new(0.0, 0.0), 1.0),
            h,
            MeshStrategy::Rings,
            None,
        )
        .unwrap()
    }

    #[test]
    fn fundamental_values_and_gradient() {
        // value 0 at |z| = 1 for unit coefficient
        let (v, _) = fundamental_2d(Point::new(1.0, 0.0), 1.0).unwrap();
        assert!(v.abs() < 1e-15);
        // gradient at z = (0.5, 0): -1/(2 pi * 0.5) in x
        let (_, g) = fundamental_2d(Point::new(0.5, 0.0), 1.0).unwrap();
        assert!((g.x + 1.0 / std::f64::consts::PI).abs() < 1e-12, "{}", g.x);
        assert_eq!(g.y, 0.0);
        // pole rejected
        assert!(fundamental_2d(Point::new(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn fundamental_delta_normalization() {
        // analytic flux of gamma grad G through a circle: -1
        let gamma = 1.7;
        let r = 0.37;
        let n = 2000;
        let mut flux = 0.0;
        for k in 0..n {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            let z = Point::new(r * th.cos(), r * th.sin());
            let (_, grad) = fundamental_2d(z, gamma).unwrap();
            let nu = z / r;
            flux += gamma * grad.dot(nu) * (std::f64::consts::TAU * r / n as f64);
        }
        assert!((flux + 1.0).abs() < 1e-6, "flux {flux}");
    }

    #[test]
    fn constant_background_has_zero_correction() {
        let mesh = disk_mesh(0.15);
        let gamma = CoefficientField::constant(2.0);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        let sol = build_corrected_singular(&solver, &gamma, Point::new(0.2, 0.1)).unwrap();
        assert_eq!(sol.correction_h1, 0.0);
        assert!(sol.correction.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pole_too_close_to_boundary_rejected() {
        let mesh = disk_mesh(0.15);
        let gamma = CoefficientField::constant(1.0);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        assert!(build_corrected_singular(&solver, &gamma, Point::new(0.99, 0.0)).is_err());
    }

    #[test]
    fn variable_background_correction_stable_under_refinement() {
        let gamma = CoefficientField::expression("1 + 0.2*x").unwrap();
        let mut norms = Vec::new();
        for h in [0.1, 0.05] {
            let mesh = disk_mesh(h);
            let solver = ForwardSolver::new(
                &mesh,
                crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
            )
            .unwrap();
            let sol =
                build_corrected_singular(&solver, &gamma, Point::new(0.0, 0.0)).unwrap();
            assert!(sol.correction_h1 > 0.0);
            norms.push(sol.correction_h1);
        }
        let rel = (norms[0] - norms[1]).abs() / norms[1];
        assert!(
            rel < 0.1,
            "H1 norm should be stable under refinement: {norms:?} (rel {rel})"
        );
    }

    #[test]
    fn correction_family_bounded_over_center_grid() {
        let gamma = CoefficientField::expression("1 + 0.2*x").unwrap();
        let mesh = disk_mesh(0.08);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        let mut norms = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                let x = Point::new(0.4 * i as f64, 0.4 * j as f64);
                let sol = build_corrected_singular(&solver, &gamma, x).unwrap();
                norms.push(sol.correction_h1);
            }
        }
        let mut sorted = norms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let max = sorted[sorted.len() - 1];
        assert!(
            max <= 3.0 * median,
            "family spread too large: max {max}, median {median} ({norms:?})"
        );
    }

    #[test]
    fn harmonicity_residual_decays_with_h() {
        let gamma = CoefficientField::expression("exp(0.3*x)").unwrap();
        let mut residuals = Vec::new();
        for h in [0.1, 0.05] {
            let mesh = disk_mesh(h);
            let solver = ForwardSolver::new(
                &mesh,
                crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
            )
            .unwrap();
            let sol =
                build_corrected_singular(&solver, &gamma, Point::new(0.0, 0.0)).unwrap();
            residuals.push(harmonicity_residual(&solver, &gamma, &sol, 0.25).unwrap());
        }
        let ratio = residuals[0] / residuals[1];
        assert!(
            ratio >= 1.7,
            "residual should decay at least linearly in h: {residuals:?} (ratio {ratio})"
        );
    }

    #[test]
    fn pole_flux_is_unit() {
        let mesh = disk_mesh(0.05);
        let gamma = CoefficientField::constant(1.0);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        let sol = build_corrected_singular(&solver, &gamma, Point::new(0.1, -0.2)).unwrap();
        let h = 0.05;
        let flux = pole_flux_check(&solver, &gamma, &sol, 4.0 * h, 8.0 * h).unwrap();
        assert!((flux - 1.0).abs() < 0.15, "cutoff pairing {flux}");
    }

    #[test]
    fn annulus_gradient_energy_matches_analytic() {
        // int over 0.1 < |y-x| < 0.2 of |grad G|^2 = log(2) / (2 pi)
        let mesh = disk_mesh(0.02);
        let gamma = CoefficientField::constant(1.0);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        let sol = build_corrected_singular(&solver, &gamma, Point::new(0.0, 0.0)).unwrap();
        let cells: Vec<usize> = (0..mesh.n_cells())
            .filter(|&c| {
                let d = mesh.cell_centroid(c).dist(sol.pole);
                (0.1..0.2).contains(&d)
            })
            .collect();
        let grads = sol.gradient_on_cells(&mesh, &cells).unwrap();
        let integral: f64 = cells
            .iter()
            .zip(grads.iter())
            .map(|(&c, g)| g.norm_sq() * mesh.cell_area(c))
            .sum();
        let exact = 2.0f64.ln() / (2.0 * std::f64::consts::PI);
        assert!(
            (integral - exact).abs() <= 0.05 * exact,
            "annulus integral {integral} vs exact {exact}"
        );
    }

    #[test]
    fn gradient_on_cells_rejects_pole_cell() {
        let mesh = disk_mesh(0.1);
        let gamma = CoefficientField::constant(1.0);
        let solver = ForwardSolver::new(
            &mesh,
            crate::fem::cell_coefficients_of(&mesh, &gamma).unwrap(),
        )
        .unwrap();
        let sol = build_corrected_singular(&solver, &gamma, Point::new(0.0, 0.0)).unwrap();
        let (pole_cell, _) = snap_to_centroid(&mesh, sol.pole);
        assert!(sol.gradient_on_cells(&mesh, &[pole_cell]).is_err());
    }
}
