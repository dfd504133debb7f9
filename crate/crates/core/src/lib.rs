//! Optimal screening of a uniformly charged domain by a uniform charge of
//! opposite sign.
//!
//! The crate computes minimizers of the relaxed Coulomb energy by projected
//! gradient, solves the equivalent obstacle problem by projected SOR,
//! reproduces the closed-form spherically symmetric solutions, solves the
//! surface-charge limit model and checks the structural properties of the
//! optimal configuration (neutrality, screening, support bounds).

pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod newtonian;
pub mod quadrature;
pub mod relaxed;
pub mod spherical;
pub mod surface;

pub use error::{Result, ScreenError};
pub use geometry::{DomainSpec, GridSpec, ScalarField};
