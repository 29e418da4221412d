//! Discrete Dirichlet-to-Neumann operators and the gap-form measurement
//! oracle.
//!
//! The operator matrix is the energy Gram of discrete harmonic extensions of
//! boundary hat functions, computed as aSchur complement with one interior
//! factorization shared across all boundary columns.  Duality pairings on the
//! boundary go through the consistent 1D mass matrix of the boundary loop.

use super::ForwardSolver;
use crate::error::{Error, Result};
use crate::geometry::Mesh2D;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Boundary-operator matrix with its duality pairing.
#[derive(Debug, Clone)]
pub struct DiscreteDtn {
    /// Outer-boundary node ids in loop order; rows/columns follow this.
    pub boundary_nodes: Vec<usize>,
    /// Energy Gram matrix: l[i][j] = a(u_i, u_j) with u_i the discrete
    /// harmonic extension of the i-th boundary hat.
    pub l: DMatrix<f64>,
    /// Consistent boundary mass matrix for duality pairings.
    pub mass: DMatrix<f64>,
}

impl DiscreteDtn {
    /// Quadratic form f^T L f.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let n = self.boundary_nodes.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.l[(i, j)] * f[j];
            }
            acc += f[i] * row;
        }
        acc
    }

    /// Relative asymmetry max |L - L^T| / max |L|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.boundary_nodes.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.l[(i, j)] - self.l[(j, i)]).abs());
                scale = scale.max(self.l[(i, j)].abs());
            }
        }
        worst / scale.max(1e-300)
    }

    /// ||L 1|| / ||L||: constants must be in the kernel.
    pub fn constant_kernel_residual(&self) -> f64 {
        let n = self.boundary_nodes.len();
        let ones = nalgebra::DVector::from_element(n, 1.0);
        let l_ones = &self.l * &ones;
        let scale = self.l.norm().max(1e-300);
        l_ones.norm() / scale
    }

    /// Eigenvalues of L relative to the boundary mass matrix, ascending.
    pub fn generalized_spectrum(&self) -> Result<Vec<f64>> {
        let chol = nalgebra::Cholesky::new(self.mass.clone())
            .ok_or_else(|| Error::Solver("boundary mass not positive definite".into()))?;
        let linv = chol.l().try_inverse().ok_or_else(|| {
            Error::Solver("singular boundary mass Cholesky factor".into())
        })?;
        let sym = &linv * &self.l * linv.transpose();
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(vals)
    }
}

/// Consistent 1D P1 mass and Laplace-Beltrami stiffness over a set of curve
/// edges, indexed by `nodes` (global ids).  Edges with endpoints outside
/// `nodes` are skipped.
pub fn curve_matrices(
    mesh: &Mesh2D,
    edges: &[[usize; 2]],
    nodes: &[usize],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = nodes.len();
    let mut slot = std::collections::HashMap::new();
    for (k, &v) in nodes.iter().enumerate() {
        slot.insert(v, k);
    }
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff = DMatrix::zeros(n, n);
    for e in edges {
        let (Some(&a), Some(&b)) = (slot.get(&e[0]), slot.get(&e[1])) else {
            continue;
        };
        let len = mesh.vertices[e[0]].dist(mesh.vertices[e[1]]);
        mass[(a, a)] += len / 3.0;
        mass[(b, b)] += len / 3.0;
        mass[(a, b)] += len / 6.0;
        mass[(b, a)] += len / 6.0;
        stiff[(a, a)] += 1.0 / len;
        stiff[(b, b)] += 1.0 / len;
        stiff[(a, b)] -= 1.0 / len;
        stiff[(b, a)] -= 1.0 / len;
    }
    (mass, stiff)
}

/// Assemble the boundary operator by Schur complement: one factorization,
/// one interior solve per boundary column.
pub fn assemble_dtn(solver: &ForwardSolver) -> Result<DiscreteDtn> {
    let mesh = solver.mesh;
    let nb = solver.boundary.len();
    let mut l = DMatrix::zeros(nb, nb);
    for j in 0..nb {
        let mut f = vec![0.0; nb];
        f[j] = 1.0;
        let u = solver.solve_dirichlet(&f)?;
        // L[:, j] via the energy rows: a(u_j, hat_b) for boundary hats b.
        let mut y = vec![0.0; mesh.n_vertices()];
        solver.stiffness.matvec(&u.values, &mut y);
        for (i, &node) in solver.boundary.iter().enumerate() {
            l[(i, j)] = y[node];
        }
    }
    let loop_edges: Vec<[usize; 2]> = {
        let bl = solver.boundary.clone();
        (0..nb).map(|i| [bl[i], bl[(i + 1) % nb]]).collect()
    };
    let (mass, _) = curve_matrices(mesh, &loop_edges, &solver.boundary);
    Ok(DiscreteDtn {
        boundary_nodes: solver.boundary.clone(),
        l,
        mass,
    })
}

/// Optional multiplicative measurement noise, seeded and pure in the data.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub rel_sigma: f64,
    pub seed: u64,
}

/// FNV-1a hash of the bytes of an f64 slice.
pub fn hash_data(f: &[f64]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in f {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl NoiseModel {
    /// Standard-normal draw determined by (seed, data); queries are
    /// reproducible regardless of evaluation order.
    fn xi(&self, f: &[f64]) -> f64 {
        use rand::RngCore;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hash_data(f));
        let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u1 = u1.max(1e-300);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// The measurement oracle: exposes only the gap quadratic form
/// Q(f) = f^T (L_gamma - L_gamma0) f for data supported on the gamma arc.
pub struct GapOracle {
    l_gamma: DMatrix<f64>,
    l_gamma0: DMatrix<f64>,
    /// Per boundary-loop position: is hat data at this node supported in the
    /// accessible arc?
    gamma_mask: Vec<bool>,
    pub noise: Option<NoiseModel>,
}

impl GapOracle {
    /// Build from the two discrete operators.  `gamma_nodes` are the global
    /// node ids whose hats are supported inside the arc.
    pub fn new(
        dtn_gamma: &DiscreteDtn,
        dtn_gamma0: &DiscreteDtn,
        gamma_nodes: &[usize],
        noise: Option<NoiseModel>,
    ) -> Result<GapOracle> {
        if dtn_gamma.boundary_nodes != dtn_gamma0.boundary_nodes {
            return Err(Error::InvalidInput(
                "operators live on different boundary bases".into(),
            ));
        }
        let set: std::collections::HashSet<usize> = gamma_nodes.iter().copied().collect();
        let gamma_mask = dtn_gamma
            .boundary_nodes
            .iter()
            .map(|n| set.contains(n))
            .collect();
        Ok(GapOracle {
            l_gamma: dtn_gamma.l.clone(),
            l_gamma0: dtn_gamma0.l.clone(),
            gamma_mask,
            noise,
        })
    }

    pub fn n_boundary(&self) -> usize {
        self.gamma_mask.len()
    }

    pub fn gamma_mask(&self) -> &[bool] {
        &self.gamma_mask
    }

    fn check_support(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.gamma_mask.len() {
            return Err(Error::InvalidInput("boundary data length mismatch".into()));
        }
        for (i, &v) in f.iter().enumerate() {
            if !self.gamma_mask[i] && v.abs() > 1e-14 {
                return Err(Error::OracleSupport(format!(
                    "component {i} = {v} lies outside the accessible arc"
                )));
            }
        }
        Ok(())
    }

    /// Gap quadratic form Q(f) = f^T (L_gamma - L_gamma0) f.
    pub fn query(&self, f: &[f64]) -> Result<f64> {
        self.check_support(f)?;
        let n = f.len();
        let mut acc = 0.0;
        for i in 0..n {
            if f[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..n {
                if f[j] != 0.0 {
                    row += (self.l_gamma[(i, j)] - self.l_gamma0[(i, j)]) * f[j];
                }
            }
            acc += f[i] * row;
        }
        if let Some(nm) = self.noise {
            acc *= 1.0 + nm.rel_sigma * nm.xi(f);
        }
        Ok(acc)
    }

    /// Polarization through the quadratic form only:
    /// (Q(f+g) - Q(f-g)) / 4.
    pub fn polarize(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let plus: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
        Ok(0.25 * (self.query(&plus)? - self.query(&minus)?))
    }

    /// Reference energy scale <Lambda_gamma0 f, f>, used to normalize
    /// indicator magnitudes.
    pub fn reference_energy(&self, f: &[f64]) -> Result<f64> {
        self.check_support(f)?;
        let n = f.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.l_gamma0[(i, j)] * f[j];
            }
            acc += f[i] * row;
        }
        Ok(acc)
    }
}
