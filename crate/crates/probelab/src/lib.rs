//! probelab: a desk-scale numerical laboratory for reconstructing a
//! conductivity inclusion — its boundary and its interior
//! Dirichlet-to-Neumann map — from localized boundary measurements, via the
//! probe method, together with an analytic verification suite for the
//! corresponding isotropic-elasticity kernels in 3D.
//!
//! The measurement model is deliberately narrow: reconstruction code sees
//! only the gap quadratic form `Q(f) = <(Λ_γ − Λ_γ₀) f, f>` for boundary
//! data `f` supported on an accessible arc, plus the known background and
//! geometry.  Everything else (true inclusion, interior conductivity) is
//! reserved for validation-mode diagnostics.
//!
//! See the `book/` directory for a guided tour; its code snippets compile
//! and run as doc-tests of this crate.

#[cfg(doctest)]
mod book;
pub mod commands;
pub mod config;
pub mod elastic;
pub mod error;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod scenario;
pub mod sparse;

pub mod inside_dtn;
pub mod probe;
pub mod runge;
pub mod singular;
pub use error::{Error, Result};
