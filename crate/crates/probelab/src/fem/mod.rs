//! Galerkin forward solver on P1 triangles: stiffness assembly with
//! centroid-sampled coefficients, Dirichlet and functional right-hand-side
//! solves behind one reusable sparse factorization.

mod checks;
mod dtn;

pub use checks::{alessandrini_pairing_check, verify_monotonicity, MonotonicityReport};
pub use dtn::{assemble_dtn, curve_matrices, hash_data, DiscreteDtn, GapOracle, NoiseModel};

use crate::error::{Error, Result};
use crate::geometry::Mesh2D;
use crate::scenario::CoefficientField;
use crate::sparse::{rcm_order, CsrMatrix, EnvelopeChol};

/// Nodal scalar field on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(n: usize) -> Self {
        DiscreteField {
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(mesh: &Mesh2D, f: impl Fn(crate::geometry::Point) -> f64) -> Self {
        DiscreteField {
            values: mesh.vertices.iter().map(|&p| f(p)).collect(),
        }
    }

    /// P1 gradient on a cell.
    pub fn cell_gradient(&self, mesh: &Mesh2D, cell: usize) -> crate::geometry::Point {
        let t = mesh.triangles[cell];
        let grads = mesh.cell_gradients(cell);
        let mut g = crate::geometry::Point::new(0.0, 0.0);
        for k in 0..3 {
            g = g + grads[k] * self.values[t[k]];
        }
        g
    }
}

impl std::ops::Index<usize> for DiscreteField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Sample a coefficient field at every cell centroid (one-point quadrature;
/// cells straddling a coefficient jump take the value at their centroid's
/// side).
pub fn cell_coefficients(mesh: &Mesh2D, gamma: &dyn Fn(crate::geometry::Point) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mesh.n_cells());
    for i in 0..mesh.n_cells() {
        let v = gamma(mesh.cell_centroid(i))?;
        if !(v > 0.0) {
            return Err(Error::Scenario(format!(
                "coefficient not positive ({v}) at cell {i}"
            )));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn cell_coefficients_of(mesh: &Mesh2D, field: &CoefficientField) -> Result<Vec<f64>> {
    cell_coefficients(mesh, &|p| field.eval(p))
}

pub fn cell_coefficients_of_scenario(
    mesh: &Mesh2D,
    scenario: &crate::scenario::ConductivityScenario,
) -> Result<Vec<f64>> {
    cell_coefficients(mesh, &|p| scenario.eval(p))
}

/// Element stiffness (unit coefficient) and consistent mass of a cell.
pub fn element_matrices(mesh: &Mesh2D, cell: usize) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let grads = mesh.cell_gradients(cell);
    let area = mesh.cell_area(cell);
    let mut s = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            s[a][b] = grads[a].dot(grads[b]) * area;
            m[a][b] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
        }
    }
    (s, m)
}

/// Assemble the global stiffness matrix for per-cell coefficients.
pub fn assemble_stiffness(mesh: &Mesh2D, cell_gamma: &[f64]) -> CsrMatrix {
    let mut trips = Vec::with_capacity(mesh.n_cells() * 9);
    for c in 0..mesh.n_cells() {
        let t = mesh.triangles[c];
        let (s, _) = element_matrices(mesh, c);
        for a in 0..3 {
            for b in 0..3 {
                trips.push((t[a], t[b], cell_gamma[c] * s[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), &mut trips)
}

/// Assemble the global consistent mass matrix.
pub fn assemble_mass(mesh: &Mesh2D) -> CsrMatrix {
    let mut trips = Vec::with_capacity(mesh.n_cells() * 9);
    for c in 0..mesh.n_cells() {
        let t = mesh.triangles[c];
        let (_, m) = element_matrices(mesh, c);
        for a in 0..3 {
            for b in 0..3 {
                trips.push((t[a], t[b], m[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), &mut trips)
}

/// Energy product  sum_cells gamma_c grad(u) . grad(v) area.
pub fn energy_product(mesh: &Mesh2D, cell_gamma: &[f64], u: &DiscreteField, v: &DiscreteField) -> f64 {
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let gu = u.cell_gradient(mesh, c);
        let gv = v.cell_gradient(mesh, c);
        acc += cell_gamma[c] * gu.dot(gv) * mesh.cell_area(c);
    }
    acc
}

/// Forward solver for one (mesh, coefficient) pair.  The interior block is
/// factored once; Dirichlet and zero-boundary load solves reuse the factor.
pub struct ForwardSolver<'m> {
    pub mesh: &'m Mesh2D,
    pub cell_gamma: Vec<f64>,
    pub stiffness: CsrMatrix,
    /// Outer-boundary nodes in loop order.
    pub boundary: Vec<usize>,
    interior: Vec<usize>,
    /// global node -> interior slot (usize::MAX for boundary nodes)
    interior_slot: Vec<usize>,
    /// interior slot -> factor slot
    iperm: Vec<usize>,
    chol: EnvelopeChol,
}

const NONE: usize = usize::MAX;

impl<'m> ForwardSolver<'m> {
    pub fn new(mesh: &'m Mesh2D, cell_gamma: Vec<f64>) -> Result<Self> {
        if cell_gamma.len() != mesh.n_cells() {
            return Err(Error::InvalidInput(
                "cell coefficient count does not match mesh".into(),
            ));
        }
        let stiffness = assemble_stiffness(mesh, &cell_gamma);
        let n = mesh.n_vertices();
        let boundary: Vec<usize> = mesh.boundary_loop().to_vec();
        let mut interior_slot = vec![NONE; n];
        let mut interior = Vec::new();
        for i in 0..n {
            if !mesh.is_boundary_node(i) {
                interior_slot[i] = interior.len();
                interior.push(i);
            }
        }
        let ni = interior.len();
        if ni == 0 {
            return Err(Error::Mesh("mesh has no interior nodes".into()));
        }
        // adjacency among interior nodes for RCM
        let mut neighbors = vec![Vec::new(); ni];
        for i in 0..n {
            if interior_slot[i] == NONE {
                continue;
            }
            let (cols, _) = stiffness.row(i);
            for &j in cols {
                if j != i && interior_slot[j] != NONE {
                    neighbors[interior_slot[i]].push(interior_slot[j]);
                }
            }
        }
        let perm = rcm_order(ni, &neighbors);
        let mut iperm = vec![0usize; ni];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // permuted interior stiffness
        let mut trips = Vec::new();
        for i in 0..n {
            let si = interior_slot[i];
            if si == NONE {
                continue;
            }
            let (cols, vals) = stiffness.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let sj = interior_slot[j];
                if sj != NONE {
                    trips.push((iperm[si], iperm[sj], v));
                }
            }
        }
        let a_ii = CsrMatrix::from_triplets(ni, &mut trips);
        let chol = EnvelopeChol::factor(&a_ii)
            .map_err(|e| Error::Solver(format!("interior factorization failed: {e}")))?;
        Ok(ForwardSolver {
            mesh,
            cell_gamma,
            stiffness,
            boundary,
            interior,
            interior_slot,
            iperm,
            chol,
        })
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// Solve the interior system A_II x = rhs (rhs indexed by interior slot).
    fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        let ni = self.interior.len();
        let mut b = vec![0.0; ni];
        for s in 0..ni {
            b[self.iperm[s]] = rhs[s];
        }
        self.chol.solve(&mut b);
        let mut x = vec![0.0; ni];
        for s in 0..ni {
            x[s] = b[self.iperm[s]];
        }
        x
    }

    /// Dirichlet solve: boundary data `f` indexed along the boundary loop.
    pub fn solve_dirichlet(&self, f: &[f64]) -> Result<DiscreteField> {
        if f.len() != self.boundary.len() {
            return Err(Error::InvalidInput(format!(
                "boundary data length {} does not match boundary node count {}",
                f.len(),
                self.boundary.len()
            )));
        }
        let n = self.mesh.n_vertices();
        let mut u = vec![0.0; n];
        for (pos, &node) in self.boundary.iter().enumerate() {
            u[node] = f[pos];
        }
        // rhs_I = -A_IB u_B
        let ni = self.interior.len();
        let mut rhs = vec![0.0; ni];
        for (slot, &node) in self.interior.iter().enumerate() {
            let (cols, vals) = self.stiffness.row(node);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if self.interior_slot[j] == NONE {
                    acc -= v * u[j];
                }
            }
            rhs[slot] = acc;
        }
        let x = self.solve_interior(&rhs);
        for (slot, &node) in self.interior.iter().enumerate() {
            u[node] = x[slot];
        }
        Ok(DiscreteField { values: u })
    }

    /// Zero-boundary solve against a nodal load vector (a functional on test
    /// fields): returns the field with  a(u, phi) = load . phi  for interior
    /// test functions and u = 0 on the outer boundary.
    pub fn solve_load(&self, load: &[f64]) -> Result<DiscreteField> {
        if load.len() != self.mesh.n_vertices() {
            return Err(Error::InvalidInput("load length mismatch".into()));
        }
        let ni = self.interior.len();
        let mut rhs = vec![0.0; ni];
        for (slot, &node) in self.interior.iter().enumerate() {
            rhs[slot] = load[node];
        }
        let x = self.solve_interior(&rhs);
        let mut u = vec![0.0; self.mesh.n_vertices()];
        for (slot, &node) in self.interior.iter().enumerate() {
            u[node] = x[slot];
        }
        Ok(DiscreteField { values: u })
    }

    /// Max interior residual |A u - load| relative to the matrix scale.
    pub fn interior_residual(&self, u: &DiscreteField, load: &[f64]) -> f64 {
        let n = self.mesh.n_vertices();
        let mut y = vec![0.0; n];
        self.stiffness.matvec(&u.values, &mut y);
        let scale = self
            .stiffness
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        let mut worst: f64 = 0.0;
        for &node in &self.interior {
            worst = worst.max((y[node] - load[node]).abs());
        }
        worst / scale
    }

    /// Boundary energy pairing <Lambda f, g> = a(u_f, ext g) computed without
    /// assembling the full operator.
    pub fn dtn_pairing(&self, u_f: &DiscreteField, g: &[f64]) -> Result<f64> {
        let ext = self.solve_dirichlet(g)?;
        Ok(energy_product(self.mesh, &self.cell_gamma, u_f, &ext))
    }
}
