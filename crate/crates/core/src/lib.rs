//! Polynomial quasi-Trefftz spaces for linear PDEs with smooth coefficients,
//! and a discontinuous Galerkin solver for 2D diffusion-advection-reaction
//! boundary value problems built on them.
//!
//! The crate is organised bottom-up:
//!
//! - [`multiindex`]: multi-index arithmetic, enumeration orders, dimensions.
//! - [`coeffjet`]: coefficient expressions and truncated Taylor jets.
//! - [`poly`]: polynomials in scaled monomials around an element center.
//! - [`qtrefftz`]: the coefficient recursion, bases and particular solutions.
//! - [`mesh2d`], [`quadrature`]: geometry and numerical integration.
//! - [`dgsolver`]: SIPG + upwind DG forms, norms and stability constants.
//! - [`sparsela`]: CSR storage, direct solves, condition estimates.
//! - [`experiments`]: the batch drivers behind the `qtdg` command line tool.

pub mod coeffjet;
pub mod dgsolver;
pub mod experiments;
pub mod mesh2d;
pub mod multiindex;
pub mod poly;
pub mod qtrefftz;
pub mod quadrature;
pub mod sparsela;

mod error;

pub use error::Error;
