//! Closed-form and pointwise-algebraic checks for the 3D isotropic
//! elasticity kernels: the Kelvin matrix, its divergence identity, the
//! trace/deviatoric split, the energy-form rewrite with its pointwise lower
//! bound, and the explicit singular-field building blocks.  Derivatives are
//! taken by second-order central differences, so the convergence-order check
//! doubles as a test of the implementation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Isotropic elasticity parameters with the standard positivity conditions
/// mu > 0 and 3 lambda + 2 mu > 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LameConstants {
    pub lambda: f64,
    pub mu: f64,
}

impl LameConstants {
    pub fn new(lambda: f64, mu: f64) -> Result<LameConstants> {
        if !(mu > 0.0) || !(3.0 * lambda + 2.0 * mu > 0.0) {
            return Err(Error::InvalidInput(format!(
                "inadmissible parameters: mu = {mu}, 3 lambda + 2 mu = {}",
                3.0 * lambda + 2.0 * mu
            )));
        }
        Ok(LameConstants { lambda, mu })
    }

    pub fn bulk3(&self) -> f64 {
        (3.0 * self.lambda + 2.0 * self.mu) / 3.0
    }
}

pub type Vec3 = [f64; 3];

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Small dense 3x3 matrix with the helpers the identities need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub fn zeros() -> Matrix3 {
        Matrix3([[0.0; 3]; 3])
    }

    pub fn identity() -> Matrix3 {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn outer(a: Vec3, b: Vec3) -> Matrix3 {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a[i] * b[j];
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn sym(&self) -> Matrix3 {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = 0.5 * (self.0[i][j] + self.0[j][i]);
            }
        }
        m
    }

    /// Frobenius inner product.
    pub fn dot(&self, o: &Matrix3) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += self.0[i][j] * o.0[i][j];
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&self, s: f64) -> Matrix3 {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &Matrix3) -> Matrix3 {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Matrix3) -> Matrix3 {
        self.add(&o.scale(-1.0))
    }

    /// Deviatoric part of the symmetric part.
    pub fn sym_deviator(&self) -> Matrix3 {
        let s = self.sym();
        s.sub(&Matrix3::identity().scale(s.trace() / 3.0))
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i] += self.0[i][j] * v[j];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Fundamental solutions
// ---------------------------------------------------------------------------

/// Scalar fundamental solution of the negative Laplacian: 1 / (4 pi |z|).
pub fn green_scalar(z: Vec3) -> Result<f64> {
    let r = norm3(z);
    if r == 0.0 {
        return Err(Error::InvalidInput("evaluated at the pole".into()));
    }
    Ok(1.0 / (4.0 * std::f64::consts::PI * r))
}

pub fn green_gradient(z: Vec3) -> Result<Vec3> {
    let r = norm3(z);
    if r == 0.0 {
        return Err(Error::InvalidInput("evaluated at the pole".into()));
    }
    let c = -1.0 / (4.0 * std::f64::consts::PI * r * r * r);
    Ok([c * z[0], c * z[1], c * z[2]])
}

/// Kelvin matrix: the fundamental solution of the constant-coefficient
/// isotropic elasticity operator,
/// (1/8pi)(1/mu + 1/(lambda+2mu)) I/|z|
/// + (1/8pi)(1/mu - 1/(lambda+2mu)) (z (x) z)/|z|^3.
pub fn kelvin_matrix(z: Vec3, lame: &LameConstants) -> Result<Matrix3> {
    let r = norm3(z);
    if r == 0.0 {
        return Err(Error::InvalidInput("evaluated at the pole".into()));
    }
    let c = 1.0 / (8.0 * std::f64::consts::PI);
    let a = c * (1.0 / lame.mu + 1.0 / (lame.lambda + 2.0 * lame.mu));
    let b = c * (1.0 / lame.mu - 1.0 / (lame.lambda + 2.0 * lame.mu));
    let mut m = Matrix3::identity().scale(a / r);
    let zz = Matrix3::outer(z, z).scale(b / (r * r * r));
    m = m.add(&zz);
    Ok(m)
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

fn shifted(z: Vec3, axis: usize, d: f64) -> Vec3 {
    let mut w = z;
    w[axis] += d;
    w
}

/// Central-difference divergence of a vector field at z.
pub fn fd_divergence(f: &dyn Fn(Vec3) -> Result<Vec3>, z: Vec3, h: f64) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..3 {
        let fp = f(shifted(z, i, h))?;
        let fm = f(shifted(z, i, -h))?;
        acc += (fp[i] - fm[i]) / (2.0 * h);
    }
    Ok(acc)
}

/// Central-difference Laplacian of a vector field, componentwise.
pub fn fd_laplacian(f: &dyn Fn(Vec3) -> Result<Vec3>, z: Vec3, h: f64) -> Result<Vec3> {
    let f0 = f(z)?;
    let mut out = [0.0; 3];
    for i in 0..3 {
        let fp = f(shifted(z, i, h))?;
        let fm = f(shifted(z, i, -h))?;
        for k in 0..3 {
            out[k] += (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h);
        }
    }
    Ok(out)
}

/// Central-difference gradient-of-divergence of a vector field.
pub fn fd_grad_div(f: &dyn Fn(Vec3) -> Result<Vec3>, z: Vec3, h: f64) -> Result<Vec3> {
    // d_i d_j f_j with mixed central stencils
    let mut out = [0.0; 3];
    for i in 0..3 {
        let mut acc = 0.0;
        for j in 0..3 {
            if i == j {
                let f0 = f(z)?;
                let fp = f(shifted(z, i, h))?;
                let fm = f(shifted(z, i, -h))?;
                acc += (fp[j] - 2.0 * f0[j] + fm[j]) / (h * h);
            } else {
                let fpp = f(shifted(shifted(z, i, h), j, h))?;
                let fpm = f(shifted(shifted(z, i, h), j, -h))?;
                let fmp = f(shifted(shifted(z, i, -h), j, h))?;
                let fmm = f(shifted(shifted(z, i, -h), j, -h))?;
                acc += (fpp[j] - fpm[j] - fmp[j] + fmm[j]) / (4.0 * h * h);
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Constant-coefficient isotropic operator applied by finite differences:
/// (lambda + mu) grad(div v) + mu laplace v.
pub fn fd_lame_operator(
    f: &dyn Fn(Vec3) -> Result<Vec3>,
    lame: &LameConstants,
    z: Vec3,
    h: f64,
) -> Result<Vec3> {
    let gd = fd_grad_div(f, z, h)?;
    let lap = fd_laplacian(f, z, h)?;
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (lame.lambda + lame.mu) * gd[k] + lame.mu * lap[k];
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identity residuals
// ---------------------------------------------------------------------------

/// |FD divergence of z -> Kelvin(z) b  minus  grad G . b / (lambda + 2 mu)|.
pub fn divergence_identity_residual(
    z: Vec3,
    b: Vec3,
    lame: &LameConstants,
    h_fd: f64,
) -> Result<f64> {
    let r = norm3(z);
    if r < 1e-3 {
        return Err(Error::InvalidInput("evaluation point too close to the pole".into()));
    }
    if h_fd > r / 100.0 {
        return Err(Error::InvalidInput(format!(
            "finite-difference step {h_fd} too large for |z| = {r}"
        )));
    }
    let field = |y: Vec3| -> Result<Vec3> { Ok(kelvin_matrix(y, lame)?.mul_vec(b)) };
    let div = fd_divergence(&field, z, h_fd)?;
    let rhs = dot3(green_gradient(z)?, b) / (lame.lambda + 2.0 * lame.mu);
    Ok((div - rhs).abs())
}

/// | alpha (tr A)^2 + 2 beta |Sym A|^2
///   - ((3 alpha + 2 beta)/3)(tr A)^2 - 2 beta |Sym A - (tr A/3) I|^2 |.
pub fn trace_dev_split_residual(a: &Matrix3, alpha: f64, beta: f64) -> f64 {
    let tr = a.trace();
    let sym = a.sym();
    let lhs = alpha * tr * tr + 2.0 * beta * sym.norm_sq();
    let dev = a.sym_deviator();
    let rhs = (3.0 * alpha + 2.0 * beta) / 3.0 * tr * tr + 2.0 * beta * dev.norm_sq();
    (lhs - rhs).abs()
}

/// Pointwise equality of the two energy-difference integrand forms for a
/// pair of displacement gradients and parameter pairs.
pub fn energy_decomposition_residual(
    grad1: &Matrix3,
    grad2: &Matrix3,
    lame1: &LameConstants,
    lame2: &LameConstants,
) -> f64 {
    let diff = grad1.sub(grad2);
    let tr_d = diff.trace();
    let tr2 = grad2.trace();
    let plain = lame1.lambda * tr_d * tr_d
        + 2.0 * lame1.mu * diff.sym().norm_sq()
        + (lame2.lambda - lame1.lambda) * tr2 * tr2
        + 2.0 * (lame2.mu - lame1.mu) * grad2.sym().norm_sq();
    let dev1 = grad1.sym_deviator();
    let dev2 = grad2.sym_deviator();
    let split = lame1.bulk3() * tr_d * tr_d
        + 2.0 * lame1.mu * dev1.sub(&dev2).norm_sq()
        + (3.0 * (lame2.lambda - lame1.lambda) + 2.0 * (lame2.mu - lame1.mu)) / 3.0 * tr2 * tr2
        + 2.0 * (lame2.mu - lame1.mu) * dev2.norm_sq();
    (plain - split).abs()
}

/// Slack of the pointwise completing-the-square bound: the split integrand
/// minus its quadratic lower bound in the first field.  Nonnegative for all
/// inputs; equals the sum of the two completed squares.
pub fn pointwise_lower_bound_check(
    grad1: &Matrix3,
    grad2: &Matrix3,
    lame1: &LameConstants,
    lame2: &LameConstants,
) -> f64 {
    let diff = grad1.sub(grad2);
    let tr_d = diff.trace();
    let tr1 = grad1.trace();
    let tr2 = grad2.trace();
    let dev1 = grad1.sym_deviator();
    let dev2 = grad2.sym_deviator();
    let lhs = lame1.bulk3() * tr_d * tr_d
        + 2.0 * lame1.mu * dev1.sub(&dev2).norm_sq()
        + (3.0 * (lame2.lambda - lame1.lambda) + 2.0 * (lame2.mu - lame1.mu)) / 3.0 * tr2 * tr2
        + 2.0 * (lame2.mu - lame1.mu) * dev2.norm_sq();
    let rhs = lame1.bulk3() / (3.0 * lame2.bulk3())
        * (3.0 * (lame2.lambda - lame1.lambda) + 2.0 * (lame2.mu - lame1.mu))
        * tr1
        * tr1
        + 2.0 * lame1.mu * (lame2.mu - lame1.mu) / lame2.mu * dev1.norm_sq();
    lhs - rhs
}

/// Leading term of the pressure-type singular displacement:
/// grad G(y - x) - [G(y - x) / (lambda + 2 mu)] (I - rhat (x) rhat) grad mu.
pub fn elastic_singular_leading(
    y: Vec3,
    x: Vec3,
    lame_at_x: &LameConstants,
    grad_mu_at_x: Vec3,
) -> Result<Vec3> {
    let z = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
    let r = norm3(z);
    if r == 0.0 {
        return Err(Error::InvalidInput("evaluated at the pole".into()));
    }
    let g = green_scalar(z)?;
    let gg = green_gradient(z)?;
    let rhat = [z[0] / r, z[1] / r, z[2] / r];
    let proj = Matrix3::identity().sub(&Matrix3::outer(rhat, rhat));
    let tang = proj.mul_vec(grad_mu_at_x);
    let c = g / (lame_at_x.lambda + 2.0 * lame_at_x.mu);
    Ok([gg[0] - c * tang[0], gg[1] - c * tang[1], gg[2] - c * tang[2]])
}

/// Named closed-form equation checks, each returning a finite-difference
/// residual expected to vanish at second order in the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormCase {
    /// laplace(|z|/8pi grad_mu) = G(z) grad_mu for a constant vector grad_mu.
    RadialPotential,
    /// mu laplace{ (M/(4 pi mu)) z/|z| } = 2 M grad G(z) for symmetric M.
    HessianSource,
    /// Operator identity L(u + grad f) = mu laplace u on polynomial (u, f)
    /// coupled by (lambda+2mu) laplace f = -(lambda+mu) div u.
    PolynomialPotential,
}

pub fn closed_form_pde_check(
    case: ClosedFormCase,
    z: Vec3,
    lame: &LameConstants,
    direction: Vec3,
    h_fd: f64,
) -> Result<f64> {
    if norm3(z) < 1e-2 {
        return Err(Error::InvalidInput(
            "evaluation point too close to the singular center".into(),
        ));
    }
    match case {
        ClosedFormCase::RadialPotential => {
            // xi(y) = |y| / (8 pi) * direction
            let field = |y: Vec3| -> Result<Vec3> {
                let r = norm3(y);
                Ok([
                    r / (8.0 * std::f64::consts::PI) * direction[0],
                    r / (8.0 * std::f64::consts::PI) * direction[1],
                    r / (8.0 * std::f64::consts::PI) * direction[2],
                ])
            };
            let lap = fd_laplacian(&field, z, h_fd)?;
            let g = green_scalar(z)?;
            let mut worst: f64 = 0.0;
            for k in 0..3 {
                worst = worst.max((lap[k] - g * direction[k]).abs());
            }
            Ok(worst)
        }
        ClosedFormCase::HessianSource => {
            // M = direction (x) direction (symmetric by construction)
            let m = Matrix3::outer(direction, direction);
            let field = |y: Vec3| -> Result<Vec3> {
                let r = norm3(y);
                if r == 0.0 {
                    return Err(Error::InvalidInput("pole".into()));
                }
                let unit = [y[0] / r, y[1] / r, y[2] / r];
                let v = m.mul_vec(unit);
                let c = 1.0 / (4.0 * std::f64::consts::PI * lame.mu);
                Ok([c * v[0], c * v[1], c * v[2]])
            };
            let lap = fd_laplacian(&field, z, h_fd)?;
            let rhs = m.mul_vec(green_gradient(z)?);
            let mut worst: f64 = 0.0;
            for k in 0..3 {
                worst = worst.max((lame.mu * lap[k] - 2.0 * rhs[k]).abs());
            }
            Ok(worst)
        }
        ClosedFormCase::PolynomialPotential => {
            // u quadratic with div u linear; f cubic solving the coupling
            let c = direction;
            let u = move |y: Vec3| -> Result<Vec3> {
                Ok([c[0] * y[0] * y[0], c[1] * y[1] * y[1], c[2] * y[2] * y[2]])
            };
            let kappa = (lame.lambda + lame.mu) / (lame.lambda + 2.0 * lame.mu);
            let f_scalar = move |y: Vec3| -> f64 {
                -kappa * (c[0] * y[0].powi(3) + c[1] * y[1].powi(3) + c[2] * y[2].powi(3)) / 3.0
            };
            // grad f by central differences (exact on cubics up to the
            // third-derivative term; combined field is what the operator
            // consumes)
            let combined = move |y: Vec3| -> Result<Vec3> {
                let mut g = [0.0; 3];
                for i in 0..3 {
                    let mut yp = y;
                    yp[i] += h_fd;
                    let mut ym = y;
                    ym[i] -= h_fd;
                    g[i] = (f_scalar(yp) - f_scalar(ym)) / (2.0 * h_fd);
                }
                let uv = u(y)?;
                Ok([uv[0] + g[0], uv[1] + g[1], uv[2] + g[2]])
            };
            let l = fd_lame_operator(&combined, lame, z, h_fd)?;
            let lap_u = fd_laplacian(&u, z, h_fd)?;
            let mut worst: f64 = 0.0;
            for k in 0..3 {
                worst = worst.max((l[k] - lame.mu * lap_u[k]).abs());
            }
            Ok(worst)
        }
    }
}

/// Residual of the constant-coefficient operator applied to grad G away
/// from the pole (vanishes identically).
pub fn lame_on_green_gradient_residual(
    z: Vec3,
    lame: &LameConstants,
    h_fd: f64,
) -> Result<f64> {
    let field = |y: Vec3| -> Result<Vec3> { green_gradient(y) };
    let l = fd_lame_operator(&field, lame, z, h_fd)?;
    Ok(norm3(l))
}
