//! Identity and inequality verifiers for ordered conductivity pairs: the
//! four basic gap-form bounds, their sharpened quotient versions, and the
//! exact bilinear pairing identity behind the indicator analysis.

use super::{energy_product, ForwardSolver};
use crate::error::Result;
use crate::geometry::Mesh2D;
use serde::Serialize;

/// All six inequality slacks for one boundary datum.  A slack is
/// (right side) - (left side); nonnegative means the inequality holds.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    /// <Lambda_1 f, f>
    pub energy_1: f64,
    /// <Lambda_2 f, f>
    pub energy_2: f64,
    /// Slacks of the four basic bounds.
    pub basic_slacks: [f64; 4],
    /// Slacks of the two sharpened (quotient) bounds; `None` when `f` pairs
    /// to zero energy and the quotients are undefined.
    pub sharpened_slacks: Option<[f64; 2]>,
    /// Magnitude used to scale tolerance decisions.
    pub scale: f64,
}

impl MonotonicityReport {
    pub fn max_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in self.basic_slacks {
            worst = worst.max(-s);
        }
        if let Some(sh) = self.sharpened_slacks {
            for s in sh {
                worst = worst.max(-s);
            }
        }
        worst
    }
}

/// Evaluate the gap-form bounds for the pair (gamma_1, gamma_2) at boundary
/// data `f` (boundary-loop indexing).
///
/// With v_i the gamma_i-solution for data f and Q_ij = <(Lambda_i -
/// Lambda_j) f, f>, the four basic bounds are
///
/// * int (1/g1 - 1/g2) |g1 grad v1|^2  <=  Q_21
/// * Q_21  <=  int (g2 - g1) |grad v1|^2
/// * int (1/g2 - 1/g1) |g2 grad v2|^2  <=  Q_12
/// * Q_12  <=  int (g1 - g2) |grad v2|^2
///
/// and the sharpened versions scale the left sides' bounds by energy
/// quotients.  All quantities are Galerkin-exact, so slacks are reliable to
/// solver precision.
pub fn verify_monotonicity(
    mesh: &Mesh2D,
    solver1: &ForwardSolver,
    solver2: &ForwardSolver,
    f: &[f64],
    want_sharpened: bool,
) -> Result<MonotonicityReport> {
    let v1 = solver1.solve_dirichlet(f)?;
    let v2 = solver2.solve_dirichlet(f)?;
    let g1 = &solver1.cell_gamma;
    let g2 = &solver2.cell_gamma;

    let energy_1 = energy_product(mesh, g1, &v1, &v1);
    let energy_2 = energy_product(mesh, g2, &v2, &v2);
    let q21 = energy_2 - energy_1; // <(Lambda_2 - Lambda_1) f, f>
    let q12 = -q21;

    // Cell quadrature of the comparison integrands.
    let mut lower1 = 0.0; // int (1/g1 - 1/g2) g1^2 |grad v1|^2
    let mut upper1 = 0.0; // int (g2 - g1) |grad v1|^2
    let mut lower2 = 0.0;
    let mut upper2 = 0.0;
    for c in 0..mesh.n_cells() {
        let a = mesh.cell_area(c);
        let gv1 = v1.cell_gradient(mesh, c).norm_sq();
        let gv2 = v2.cell_gradient(mesh, c).norm_sq();
        lower1 += (1.0 / g1[c] - 1.0 / g2[c]) * g1[c] * g1[c] * gv1 * a;
        upper1 += (g2[c] - g1[c]) * gv1 * a;
        lower2 += (1.0 / g2[c] - 1.0 / g1[c]) * g2[c] * g2[c] * gv2 * a;
        upper2 += (g1[c] - g2[c]) * gv2 * a;
    }

    let basic_slacks = [q21 - lower1, upper1 - q21, q12 - lower2, upper2 - q12];
    let sharpened_slacks = if want_sharpened && energy_1 > 0.0 && energy_2 > 0.0 {
        Some([
            (energy_1 / energy_2) * q21 - lower1,
            (energy_2 / energy_1) * q12 - lower2,
        ])
    } else {
        if want_sharpened {
            return Err(crate::error::Error::InvalidInput(
                "sharpened bounds need nonconstant data (positive energies)".into(),
            ));
        }
        None
    };
    let scale = energy_1
        .abs()
        .max(energy_2.abs())
        .max(upper1.abs())
        .max(upper2.abs());
    Ok(MonotonicityReport {
        energy_1,
        energy_2,
        basic_slacks,
        sharpened_slacks,
        scale,
    })
}

/// Residual of the exact bilinear identity
/// <(Lambda_gamma - Lambda_gamma0) f, g> = int_D (gamma - gamma0)
/// grad u_gamma(f) . grad u_gamma0(g),
/// which holds at the Galerkin level up to solver precision.
pub fn alessandrini_pairing_check(
    mesh: &Mesh2D,
    solver_gamma: &ForwardSolver,
    solver_gamma0: &ForwardSolver,
    f: &[f64],
    g: &[f64],
) -> Result<f64> {
    let u_f = solver_gamma.solve_dirichlet(f)?;
    let u0_g = solver_gamma0.solve_dirichlet(g)?;
    let u_g = solver_gamma.solve_dirichlet(g)?;
    let u0_f = solver_gamma0.solve_dirichlet(f)?;

    // <Lambda_gamma f, g> = a_gamma(u_f, u_g); <Lambda_gamma0 f, g> =
    // a_gamma0(u0_f, u0_g).
    let lhs = energy_product(mesh, &solver_gamma.cell_gamma, &u_f, &u_g)
        - energy_product(mesh, &solver_gamma0.cell_gamma, &u0_f, &u0_g);

    let mut rhs = 0.0;
    for c in 0..mesh.n_cells() {
        let dg = solver_gamma.cell_gamma[c] - solver_gamma0.cell_gamma[c];
        if dg != 0.0 {
            let gu = u_f.cell_gradient(mesh, c);
            let gv = u0_g.cell_gradient(mesh, c);
            rhs += dg * gu.dot(gv) * mesh.cell_area(c);
        }
    }
    Ok((lhs - rhs).abs())
}
