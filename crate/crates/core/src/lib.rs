//! Finite-dimensional engine for compatible quantum theory: subspace
//! lattices, sample spaces and frameworks, families of histories and their
//! consistency, plus independent cross-checks.

pub mod cli;
pub mod error;
pub mod framework;
pub mod histories;
pub mod lattice;
pub mod numerics;
pub mod oracles;
pub mod random;
pub mod report;
pub mod scenario;

pub use error::{CqtError, Result};
