//! Geometry and functional inequalities for systems of Hörmander vector fields.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the whole numeric
//! pipeline:
//!
//! - [`expr`] and [`dsl`]: symbolic coefficient functions and the textual
//!   vector-field language.
//! - [`lie`]: iterated commutators, the determinants `λ_I(x)`, the
//!   Nagel–Stein–Wainger polynomial `Λ(x,r)`, the pointwise homogeneous
//!   dimension `ν(x)`, the generalized Métivier index `ν̃` and the local
//!   homogeneous dimension `Q`.
//! - [`exponents`]: the embedding-exponent calculator and the parameter
//!   validator for the Gagliardo–Nirenberg family.
//! - [`metric`]: a lattice approximation of the control (subunit) distance.
//! - [`geometry`]: Monte Carlo ball volumes, ball–box and doubling sweeps,
//!   kernel-weight integrals and the weak-type kernel check.
//! - [`lab`]: test functions, quadrature norms and the inequality suites.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dsl;
pub mod exponents;
pub mod expr;
pub mod geometry;
pub mod lab;
pub mod lie;
pub mod linalg;
pub mod math;
pub mod metric;
pub mod rng;
pub mod system;

pub use dsl::{parse_system, ParseError};
pub use expr::{EvalError, Expr, Program, Rational};
pub use lie::{CommutatorBasis, IndexReport};
pub use metric::{DistanceOracle, OracleParams};
pub use system::{DomainSpec, VectorField, VectorFieldSystem};
