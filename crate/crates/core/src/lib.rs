//! Computational tools for affine partially hyperbolic actions on
//! Heisenberg nilmanifolds.
//!
//! The crate covers exact 2-step nilpotent group arithmetic, automorphisms
//! built from symplectic integer matrices, Lyapunov and Weyl chamber
//! analysis of commuting integer matrices, a Franks-Manning coordinate
//! solver, su-word dynamics, circle-map rotation numbers and centralizer
//! ranks in `GL(d, Z)` and `Sp(d, Z)`.

#![allow(clippy::needless_range_loop)]

pub mod affine;
pub mod centralizer;
pub mod circle;
pub mod cli;
pub mod error;
pub mod intmat;
pub mod nilpotent;
pub mod poly;
pub mod scalar;
pub mod selftest;
pub mod semiconjugacy;
pub mod spectral;
pub mod suword;

pub use affine::{AffineMap, NilAutomorphism, SymplecticMatrix};
pub use error::{Error, Result};
pub use intmat::IntMatrix;
pub use nilpotent::{GroupElement, LatticeSpec, LieElement};
pub use poly::{classify_roots, mahler_measure, IntPoly, RootClassification};
pub use scalar::Scalar;

/// Exact rational scalar used for lattice membership.
pub type Rational = num_rational::Ratio<i64>;

pub type GroupElementF64 = GroupElement<f64>;
pub type GroupElementF32 = GroupElement<f32>;
pub type GroupElementQ = GroupElement<Rational>;
pub type LieElementF64 = LieElement<f64>;
pub type LieElementQ = LieElement<Rational>;
