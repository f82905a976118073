//! Sparse Bayesian discovery of Lagrangians from trajectory and field data.
//!
//! The pipeline: build a candidate dictionary, push it through the
//! Euler-Lagrange operator, pick the kinetic column as regression target,
//! run a spike-and-slab Gibbs sampler per degree of freedom, then assemble the
//! Lagrangian and derive its Hamiltonian and equations of motion.

pub mod data;
pub mod dictionary;
pub mod discovery;
pub mod error;
pub mod exec;
pub mod expr;
pub mod integrate;
pub mod sbl;
pub mod sweep;
pub mod systems;
pub mod transforms;

pub use error::{Error, Result};
