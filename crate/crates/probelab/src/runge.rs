//! Selection of arc-supported boundary data whose background solutions
//! approximate a target field away from an excluded region, realized as
//! Tikhonov-regularized least squares over a decreasing penalty schedule.
//!
//! The extension operator (one background solve per accessible boundary
//! node) is assembled once per (mesh, background, arc) and shared across
//! every target, region, and penalty weight.

use crate::error::{Error, Result};
use crate::fem::{curve_matrices, DiscreteField, ForwardSolver};
use crate::geometry::Mesh2D;
use nalgebra::{Cholesky, DMatrix, DVector};

/// One penalty stage of a Runge approximation.
#[derive(Debug, Clone)]
pub struct RungeStage {
    pub rho: f64,
    /// Coefficients over the arc nodes (same order as the workspace's
    /// `gamma_nodes`).
    pub coefficients: Vec<f64>,
    /// Absolute H1(K) error of the extension against the target.
    pub error: f64,
    /// Error relative to the target's H1(K) norm.
    pub rel_error: f64,
    /// Upper estimate of the regularized normal-matrix condition number.
    pub cond_estimate: f64,
}

/// Stages in schedule order plus the index of the first conditioning breach
/// (stages from that index on are unreliable and excluded from `best`).
#[derive(Debug, Clone)]
pub struct RungeResult {
    pub stages: Vec<RungeStage>,
    pub breach_index: Option<usize>,
    /// H1(K) norm of the target.
    pub target_norm: f64,
}

impl RungeResult {
    /// Stages before the conditioning breach.
    pub fn usable(&self) -> &[RungeStage] {
        match self.breach_index {
            Some(i) => &self.stages[..i],
            None => &self.stages,
        }
    }

    /// The best usable stage: the last one (errors are non-increasing along
    /// the schedule until the breach).
    pub fn best(&self) -> Option<&RungeStage> {
        self.usable().last()
    }
}

/// Runge problem: approximate `target` in H1 over the cells of `region`.
pub struct RungeProblem<'a> {
    pub target: &'a DiscreteField,
    pub region: &'a [usize],
    pub schedule: &'a [f64],
}

/// Boundary smoothing norm for the penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingNorm {
    /// Arc mass + arc Laplace-Beltrami stiffness (default).
    H1Arc,
    /// Plain Euclidean norm of the coefficient vector.
    L2,
}

/// Precomputed extension machinery for one (mesh, background, arc).
pub struct RungeWorkspace<'m> {
    pub mesh: &'m Mesh2D,
    /// Global node ids of the arc-interior boundary nodes.
    pub gamma_nodes: Vec<usize>,
    /// Positions of those nodes in the boundary loop.
    pub gamma_pos: Vec<usize>,
    /// Extension matrix: column j is the background solution with hat data
    /// at arc node j (all mesh nodes).
    extension: DMatrix<f64>,
    /// (S + M) * extension, for fast full-domain right-hand sides.
    sm_extension: DMatrix<f64>,
    /// Gram matrix of extensions in H1 over all cells.
    gram_full: DMatrix<f64>,
    /// Penalty matrix.
    reg: DMatrix<f64>,
    lambda_max_gram: f64,
    lambda_max_reg: f64,
    lambda_min_reg: f64,
    n_boundary: usize,
}

fn power_lambda_max(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.7).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = w / lambda;
    }
    lambda
}

fn lambda_min_spd(m: &DMatrix<f64>, iters: usize) -> Result<f64> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Solver("penalty matrix is not positive definite".into()))?;
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.3).cos());
    v /= v.norm();
    let mut mu = 0.0;
    for _ in 0..iters {
        let w = chol.solve(&v);
        mu = w.norm();
        v = w / mu;
    }
    Ok(1.0 / mu)
}

impl<'m> RungeWorkspace<'m> {
    /// Build from a background solver.  `gamma_nodes` must be boundary
    /// nodes whose hat data is supported inside the accessible arc.
    pub fn new(
        solver: &ForwardSolver<'m>,
        gamma_nodes: Vec<usize>,
        smoothing: SmoothingNorm,
    ) -> Result<Self> {
        let mesh = solver.mesh;
        if gamma_nodes.is_empty() {
            return Err(Error::InvalidInput("empty accessible arc".into()));
        }
        let loop_pos: std::collections::HashMap<usize, usize> = solver
            .boundary
            .iter()
            .enumerate()
            .map(|(pos, &node)| (node, pos))
            .collect();
        let mut gamma_pos = Vec::with_capacity(gamma_nodes.len());
        for &g in &gamma_nodes {
            let &pos = loop_pos
                .get(&g)
                .ok_or_else(|| Error::InvalidInput(format!("node {g} is not on the boundary")))?;
            gamma_pos.push(pos);
        }
        let n = mesh.n_vertices();
        let ng = gamma_nodes.len();
        let nb = solver.boundary.len();

        let mut extension = DMatrix::zeros(n, ng);
        for (j, &pos) in gamma_pos.iter().enumerate() {
            let mut f = vec![0.0; nb];
            f[pos] = 1.0;
            let u = solver.solve_dirichlet(&f)?;
            extension.column_mut(j).copy_from_slice(&u.values);
        }

        // S + M (unit coefficient stiffness + consistent mass)
        let stiff = crate::fem::assemble_stiffness(mesh, &vec![1.0; mesh.n_cells()]);
        let mass = crate::fem::assemble_mass(mesh);
        let mut sm_extension = DMatrix::zeros(n, ng);
        let mut tmp = vec![0.0; n];
        let mut tmp2 = vec![0.0; n];
        for j in 0..ng {
            let col: Vec<f64> = extension.column(j).iter().copied().collect();
            stiff.matvec(&col, &mut tmp);
            mass.matvec(&col, &mut tmp2);
            for i in 0..n {
                sm_extension[(i, j)] = tmp[i] + tmp2[i];
            }
        }
        let gram_full = extension.transpose() * &sm_extension;
        let gram_full = (&gram_full + gram_full.transpose()) * 0.5;

        let reg = match smoothing {
            SmoothingNorm::H1Arc => {
                let bl = mesh.boundary_loop();
                let loop_edges: Vec<[usize; 2]> = (0..bl.len())
                    .map(|i| [bl[i], bl[(i + 1) % bl.len()]])
                    .collect();
                let (m_arc, s_arc) = curve_matrices(mesh, &loop_edges, &gamma_nodes);
                m_arc + s_arc
            }
            SmoothingNorm::L2 => DMatrix::identity(ng, ng),
        };

        let lambda_max_gram = power_lambda_max(&gram_full, 60);
        let lambda_max_reg = power_lambda_max(&reg, 60);
        let lambda_min_reg = lambda_min_spd(&reg, 60)?;
        Ok(RungeWorkspace {
            mesh,
            gamma_nodes,
            gamma_pos,
            extension,
            sm_extension,
            gram_full,
            reg,
            lambda_max_gram,
            lambda_max_reg,
            lambda_min_reg,
            n_boundary: nb,
        })
    }

    pub fn n_arc(&self) -> usize {
        self.gamma_nodes.len()
    }

    /// Gram matrix of the extensions in H1 over the whole domain.
    pub fn gram_full(&self) -> &DMatrix<f64> {
        &self.gram_full
    }

    /// Embed arc coefficients into full boundary-loop data (exact zeros off
    /// the arc).
    pub fn embed_boundary(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_boundary];
        for (j, &pos) in self.gamma_pos.iter().enumerate() {
            f[pos] = coefficients[j];
        }
        f
    }

    /// Extension field for given arc coefficients.
    pub fn extend(&self, coefficients: &[f64]) -> DiscreteField {
        let a = DVector::from_column_slice(coefficients);
        let u = &self.extension * a;
        DiscreteField {
            values: u.iter().copied().collect(),
        }
    }

    /// H1 contribution of one cell to the Gram matrix, subtracted in place.
    pub fn gram_subtract_cell(&self, gram: &mut DMatrix<f64>, cell: usize) {
        let t = self.mesh.triangles[cell];
        let (s, m) = crate::fem::element_matrices(self.mesh, cell);
        let ng = self.n_arc();
        // rows of the extension at the three cell nodes
        for a in 0..3 {
            for b in 0..3 {
                let w = s[a][b] + m[a][b];
                if w == 0.0 {
                    continue;
                }
                let ra = self.extension.row(t[a]);
                let rb = self.extension.row(t[b]);
                for i in 0..ng {
                    let rai = ra[i];
                    if rai == 0.0 {
                        continue;
                    }
                    let scale = w * rai;
                    for j in 0..ng {
                        gram[(i, j)] -= scale * rb[j];
                    }
                }
            }
        }
    }

    /// Right-hand side E^T (S+M) g over the whole domain.
    pub fn rhs_full(&self, target: &DiscreteField) -> DVector<f64> {
        let g = DVector::from_column_slice(&target.values);
        self.sm_extension.transpose() * g
    }

    /// Contribution of one cell to E^T (S+M) g and to g^T (S+M) g.
    pub fn cell_rhs_and_norm(
        &self,
        cell: usize,
        target: &DiscreteField,
        rhs: &mut DVector<f64>,
        norm_sq: &mut f64,
        sign: f64,
    ) {
        let t = self.mesh.triangles[cell];
        let (s, m) = crate::fem::element_matrices(self.mesh, cell);
        let gv = [
            target.values[t[0]],
            target.values[t[1]],
            target.values[t[2]],
        ];
        for a in 0..3 {
            let mut ag = 0.0;
            for b in 0..3 {
                ag += (s[a][b] + m[a][b]) * gv[b];
            }
            *norm_sq += sign * gv[a] * ag;
            let ra = self.extension.row(t[a]);
            for i in 0..self.n_arc() {
                rhs[i] += sign * ra[i] * ag;
            }
        }
    }

    /// Full-domain target norm g^T (S+M) g.
    pub fn target_norm_sq_full(&self, target: &DiscreteField) -> f64 {
        let stiff = crate::fem::assemble_stiffness(self.mesh, &vec![1.0; self.mesh.n_cells()]);
        let mass = crate::fem::assemble_mass(self.mesh);
        let n = self.mesh.n_vertices();
        let mut tmp = vec![0.0; n];
        let mut tmp2 = vec![0.0; n];
        stiff.matvec(&target.values, &mut tmp);
        mass.matvec(&target.values, &mut tmp2);
        target
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| v * (tmp[i] + tmp2[i]))
            .sum()
    }

    /// Exact H1(K) error of the extension of `coefficients` against the
    /// target, evaluated by direct differencing (no cancellation).
    pub fn exact_error(
        &self,
        coefficients: &[f64],
        target: &DiscreteField,
        region_mask: &[bool],
    ) -> f64 {
        let diff = {
            let ext = self.extend(coefficients);
            let mut d = ext.values;
            for (i, v) in d.iter_mut().enumerate() {
                *v -= target.values[i];
            }
            DiscreteField { values: d }
        };
        let mut acc = 0.0;
        for c in 0..self.mesh.n_cells() {
            if !region_mask[c] {
                continue;
            }
            let t = self.mesh.triangles[c];
            let (s, m) = crate::fem::element_matrices(self.mesh, c);
            let dv = [diff.values[t[0]], diff.values[t[1]], diff.values[t[2]]];
            for a in 0..3 {
                for b in 0..3 {
                    acc += dv[a] * (s[a][b] + m[a][b]) * dv[b];
                }
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Solve the penalty schedule for a prepared (gram, rhs, norm) triple.
    pub fn solve_schedule(
        &self,
        gram_k: &DMatrix<f64>,
        rhs_k: &DVector<f64>,
        target_norm_sq: f64,
        schedule: &[f64],
        cond_cap: f64,
    ) -> Result<RungeResult> {
        if schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidInput(
                "penalty schedule must be strictly decreasing and positive".into(),
            ));
        }
        let target_norm = target_norm_sq.max(0.0).sqrt();
        let mut stages = Vec::with_capacity(schedule.len());
        let mut breach_index = None;
        for (si, &rho) in schedule.iter().enumerate() {
            let cond_estimate =
                (self.lambda_max_gram + rho * self.lambda_max_reg) / (rho * self.lambda_min_reg);
            let normal = gram_k + &self.reg * rho;
            let chol = match Cholesky::new(normal) {
                Some(c) => c,
                None => {
                    breach_index = Some(si);
                    break;
                }
            };
            let alpha = chol.solve(rhs_k);
            let err_sq = (&alpha.transpose() * gram_k * &alpha)[(0, 0)]
                - 2.0 * alpha.dot(rhs_k)
                + target_norm_sq;
            let error = err_sq.max(0.0).sqrt();
            stages.push(RungeStage {
                rho,
                coefficients: alpha.iter().copied().collect(),
                error,
                rel_error: error / target_norm.max(1e-300),
                cond_estimate,
            });
            if cond_estimate > cond_cap && breach_index.is_none() {
                breach_index = Some(si + 1);
                break;
            }
        }
        Ok(RungeResult {
            stages,
            breach_index,
            target_norm,
        })
    }

    /// Solve a standalone problem; the misfit region is an arbitrary cell
    /// set.  Uses direct assembly when the region is small, complement
    /// subtraction when it is most of the domain.
    pub fn approximate_target(
        &self,
        problem: &RungeProblem,
        cond_cap: f64,
    ) -> Result<RungeResult> {
        if problem.region.is_empty() {
            return Err(Error::InvalidInput("empty approximation region".into()));
        }
        let n_cells = self.mesh.n_cells();
        let ng = self.n_arc();
        let in_region = {
            let mut mask = vec![false; n_cells];
            for &c in problem.region {
                mask[c] = true;
            }
            mask
        };
        let (gram, rhs, norm_sq) = if problem.region.len() * 2 <= n_cells {
            // direct assembly over the region
            let mut gram = DMatrix::zeros(ng, ng);
            let mut rhs = DVector::zeros(ng);
            let mut norm_sq = 0.0;
            for &c in problem.region {
                self.gram_subtract_cell(&mut gram, c);
                self.cell_rhs_and_norm(c, problem.target, &mut rhs, &mut norm_sq, 1.0);
            }
            // gram_subtract_cell subtracts; flip the sign back
            (-gram, rhs, norm_sq)
        } else {
            let mut gram = self.gram_full.clone();
            let mut rhs = self.rhs_full(problem.target);
            let mut norm_sq = self.target_norm_sq_full(problem.target);
            for c in 0..n_cells {
                if !in_region[c] {
                    self.gram_subtract_cell(&mut gram, c);
                    self.cell_rhs_and_norm(c, problem.target, &mut rhs, &mut norm_sq, -1.0);
                }
            }
            (gram, rhs, norm_sq)
        };
        let mut res = self.solve_schedule(&gram, &rhs, norm_sq, problem.schedule, cond_cap)?;
        // standalone path: replace the cancellation-prone quadratic-form
        // error with the directly evaluated one
        for stage in res.stages.iter_mut() {
            stage.error = self.exact_error(&stage.coefficients, problem.target, &in_region);
            stage.rel_error = stage.error / res.target_norm.max(1e-300);
        }
        Ok(res)
    }
}

/// Default penalty schedule 10^-1 .. 10^-10.
pub fn default_schedule() -> Vec<f64> {
    (1..=10).map(|n| 10f64.powi(-n)).collect()
}

/// Approximate the singular solution of a needle at tail parameter `t`:
/// composes the exclusion region, the corrected singular solution, and the
/// penalty sweep over the tube complement.
pub fn runge_for_needle(
    workspace: &RungeWorkspace,
    solver: &ForwardSolver,
    gamma0: &crate::scenario::CoefficientField,
    needle: &crate::geometry::Needle,
    t: f64,
    delta: f64,
    schedule: &[f64],
    cond_cap: f64,
) -> Result<(crate::singular::SingularSolution, RungeResult)> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidInput("tail parameter must be in (0, 1)".into()));
    }
    let sol = crate::singular::build_corrected_singular(solver, gamma0, needle.point_at(t))?;
    let region = workspace.mesh.exclusion_region(needle, t, delta)?;
    let target = sol.nodal_field(workspace.mesh);
    let result = workspace.approximate_target(
        &RungeProblem {
            target: &target,
            region: &region,
            schedule,
        },
        cond_cap,
    )?;
    Ok((sol, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::cell_coefficients_of;
    use crate::geometry::{build_domain_mesh, DomainSpec, MeshStrategy, Point};
    use crate::scenario::CoefficientField;

    fn setup(
        h: f64,
        arc: (f64, f64),
    ) -> (Mesh2D, CoefficientField) {
        let mut mesh = build_domain_mesh(
            &DomainSpec::disk(Point::new(0.0, 0.0), 1.0),
            h,
            MeshStrategy::Rings,
            None,
        )
        .unwrap();
        mesh.mark_gamma_arc(Point::new(0.0, 0.0), arc.0, arc.1).unwrap();
        (mesh, CoefficientField::constant(1.0))
    }

    #[test]
    fn representable_target_is_recovered() {
        let (mesh, gamma) = setup(0.15, (0.0, std::f64::consts::TAU));
        let solver =
            ForwardSolver::new(&mesh, cell_coefficients_of(&mesh, &gamma).unwrap()).unwrap();
        let ws =
            RungeWorkspace::new(&solver, mesh.gamma_interior_nodes(), SmoothingNorm::H1Arc)
                .unwrap();
        // target: extension of known arc data
        let g_true: Vec<f64> = ws
            .gamma_nodes
            .iter()
            .map(|&n| (2.0 * mesh.vertices[n].angle()).sin())
            .collect();
        let target = ws.extend(&g_true);
        let region: Vec<usize> = (0..mesh.n_cells()).collect();
        let schedule = [1e-6, 1e-9, 1e-12];
        let res = ws
            .approximate_target(
                &RungeProblem {
                    target: &target,
                    region: &region,
                    schedule: &schedule,
                },
                1e16,
            )
            .unwrap();
        let best = res.best().unwrap();
        assert!(
            best.error <= 1e-8 * res.target_norm.max(1.0),
            "error {} at rho {}",
            best.error,
            best.rho
        );
    }

    #[test]
    fn errors_non_increasing_until_breach() {
        // The excluded set must be a tube from the pole to the boundary: a
        // bare ball around the pole leaves its source flux trapped and no
        // background solution can approximate the target around it.
        let (mesh, gamma) = setup(0.1, (2.0, 4.3));
        let solver =
            ForwardSolver::new(&mesh, cell_coefficients_of(&mesh, &gamma).unwrap()).unwrap();
        let ws =
            RungeWorkspace::new(&solver, mesh.gamma_interior_nodes(), SmoothingNorm::H1Arc)
                .unwrap();
        let sol = crate::singular::build_corrected_singular(
            &solver,
            &gamma,
            Point::new(-0.45, -0.3),
        )
        .unwrap();
        let target = sol.nodal_field(&mesh);
        // tube from the pole radially out through the accessible side, plus
        // a clearance band along the whole outer boundary
        let exit = sol.pole / sol.pole.norm();
        let region: Vec<usize> = (0..mesh.n_cells())
            .filter(|&c| {
                let p = mesh.cell_centroid(c);
                crate::geometry::dist_point_segment(p, sol.pole, exit) > 0.18
                    && p.norm() < 1.0 - 0.15
            })
            .collect();
        let schedule = default_schedule();
        let res = ws
            .approximate_target(
                &RungeProblem {
                    target: &target,
                    region: &region,
                    schedule: &schedule,
                },
                1e14,
            )
            .unwrap();
        let usable = res.usable();
        assert!(usable.len() >= 3, "too few usable stages");
        for w in usable.windows(2) {
            assert!(
                w[1].error <= w[0].error * (1.0 + 1e-9),
                "errors increased: {} -> {} at rho {}",
                w[0].error,
                w[1].error,
                w[1].rho
            );
        }
        // the approximation is meaningfully good away from the tail
        assert!(
            usable.last().unwrap().rel_error < 0.5,
            "rel error {}",
            usable.last().unwrap().rel_error
        );
    }

    #[test]
    fn support_invariant_exact_zeros_off_arc() {
        let (mesh, gamma) = setup(0.15, (0.3, 2.4));
        let solver =
            ForwardSolver::new(&mesh, cell_coefficients_of(&mesh, &gamma).unwrap()).unwrap();
        let ws =
            RungeWorkspace::new(&solver, mesh.gamma_interior_nodes(), SmoothingNorm::H1Arc)
                .unwrap();
        let coefs: Vec<f64> = (0..ws.n_arc()).map(|i| (i as f64).cos()).collect();
        let f = ws.embed_boundary(&coefs);
        let arc_pos: std::collections::HashSet<usize> = ws.gamma_pos.iter().copied().collect();
        for (pos, &v) in f.iter().enumerate() {
            if !arc_pos.contains(&pos) {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn enlarging_arc_does_not_hurt() {
        // same K, same target, fixed rho: a superset arc achieves an error
        // at most 1e-12 worse
        let h = 0.1;
        let (mesh_small, gamma) = setup(h, (0.5, 2.0));
        let (mesh_big, _) = setup(h, (0.3, 2.6));
        let solver_s = ForwardSolver::new(
            &mesh_small,
            cell_coefficients_of(&mesh_small, &gamma).unwrap(),
        )
        .unwrap();
        let solver_b = ForwardSolver::new(
            &mesh_big,
            cell_coefficients_of(&mesh_big, &gamma).unwrap(),
        )
        .unwrap();
        let ws_s = RungeWorkspace::new(
            &solver_s,
            mesh_small.gamma_interior_nodes(),
            SmoothingNorm::L2,
        )
        .unwrap();
        let ws_b = RungeWorkspace::new(
            &solver_b,
            mesh_big.gamma_interior_nodes(),
            SmoothingNorm::L2,
        )
        .unwrap();
        let sol = crate::singular::build_corrected_singular(
            &solver_s,
            &gamma,
            Point::new(-0.2, -0.3),
        )
        .unwrap();
        let target = sol.nodal_field(&mesh_small);
        let region: Vec<usize> = (0..mesh_small.n_cells())
            .filter(|&c| mesh_small.cell_centroid(c).dist(sol.pole) > 0.15)
            .collect();
        let schedule = [1e-4];
        let prob = RungeProblem {
            target: &target,
            region: &region,
            schedule: &schedule,
        };
        let e_small = ws_s.approximate_target(&prob, 1e16).unwrap().stages[0].error;
        let e_big = ws_b.approximate_target(&prob, 1e16).unwrap().stages[0].error;
        assert!(
            e_big <= e_small + 1e-12,
            "superset arc hurt the misfit: {e_big} > {e_small}"
        );
    }

    #[test]
    fn bitwise_reproducible() {
        let (mesh, gamma) = setup(0.15, (0.5, 2.0));
        let solver =
            ForwardSolver::new(&mesh, cell_coefficients_of(&mesh, &gamma).unwrap()).unwrap();
        let run = || {
            let ws = RungeWorkspace::new(
                &solver,
                mesh.gamma_interior_nodes(),
                SmoothingNorm::H1Arc,
            )
            .unwrap();
            let sol = crate::singular::build_corrected_singular(
                &solver,
                &gamma,
                Point::new(0.2, 0.2),
            )
            .unwrap();
            let target = sol.nodal_field(&mesh);
            let region: Vec<usize> = (0..mesh.n_cells())
                .filter(|&c| mesh.cell_centroid(c).dist(sol.pole) > 0.15)
                .collect();
            let schedule = [1e-2, 1e-4, 1e-6];
            let res = ws
                .approximate_target(
                    &RungeProblem {
                        target: &target,
                        region: &region,
                        schedule: &schedule,
                    },
                    1e14,
                )
                .unwrap();
            res.stages
                .iter()
                .flat_map(|s| s.coefficients.iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }
}
