//! Rank-window homotopy toolkit.

pub mod linalg;
pub mod random;
pub mod complex;
pub mod field;
pub mod bundles;
pub mod chern;
pub mod homotopy;
pub mod generators;
pub mod suite;
pub mod harness;
