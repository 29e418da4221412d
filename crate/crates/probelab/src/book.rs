//! The guide chapters double as doc-tests: every fenced Rust block in
//! book/src compiles and runs under `cargo test --doc`, keeping the book
//! and the crate in lockstep.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/phantoms.md")]
pub mod phantoms {}
#[doc = include_str!("../../../book/src/forward.md")]
pub mod forward {}
#[doc = include_str!("../../../book/src/singular.md")]
pub mod singular {}
#[doc = include_str!("../../../book/src/approximation.md")]
pub mod approximation {}
#[doc = include_str!("../../../book/src/probing.md")]
pub mod probing {}
#[doc = include_str!("../../../book/src/interior.md")]
pub mod interior {}
#[doc = include_str!("../../../book/src/elasticity.md")]
pub mod elasticity {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
