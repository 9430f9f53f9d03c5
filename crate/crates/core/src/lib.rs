//! Computational models of semilattice-graded many-body Hamiltonians.
//!
//! The crate has two legs standing on one combinatorial core:
//!
//! * [`fingroup`] realizes kernel operators, crossed-product spans and the
//!   graded components exactly, as finite complex matrices over finite
//!   abelian groups, and verifies the span identities by numerical rank.
//! * [`euclid`] + [`spectral`] build discretized non-relativistic many-body
//!   Hamiltonians over a semilattice of coordinate subspaces and compute
//!   HVZ onsets, threshold sets, rho-hat profiles and Mourre positivity
//!   checks for them.
//!
//! [`semilattice`] supplies the shared order combinatorics and
//! [`threshold`] the scalar calculus (N-functions and the rho recursion)
//! both legs rely on.

pub mod config;
pub mod error;
pub mod euclid;
pub mod fingroup;
mod linalg;
pub mod report;
pub mod semilattice;
pub mod spectral;
pub mod threshold;

pub use error::{Error, Result};
