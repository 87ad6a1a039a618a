//! Bandit learning with self-concordant barriers in strongly monotone games.

pub mod equilibrium;
pub mod error;
pub mod games;
pub mod harness;
pub mod geometry;
pub mod learners;
pub mod sampling;

pub use error::{Error, Result};
