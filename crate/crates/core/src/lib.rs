//! Minimal-intervention safety filtering for linear systems among polytopic
//! obstacles.
//!
//! Offline, [`invariance`] computes a certified control-invariant polytope for
//! every obstacle face. Online, [`filter`] encodes the one-step problem with
//! [`encode`] and solves it with the branch-and-bound in [`solve`]. [`world`]
//! hosts the maze game used to exercise the whole pipeline.

pub mod encode;
pub mod filter;
pub mod geometry;
pub mod invariance;
pub mod solve;
pub mod world;

pub use geometry::{LpSolution, LpStatus, Polytope, Sense};
