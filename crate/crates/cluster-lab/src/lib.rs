//! Desk-scale numerical laboratory for the continuous cluster expansion of
//! the regularized phi^4 theory.
//!
//! The crate builds the objects of the expansion on small lattice
//! discretizations in one and two dimensions and checks its identities and
//! bounds against independent brute-force oracles:
//!
//! * [`covariance`] — the regularized heat-kernel covariance, the full
//!   covariance and exponential-decay certificates;
//! * [`geometry`] — admissible point configurations, unit balls and shells,
//!   and the spanning/Steiner tree-length pair;
//! * [`trees`] — ordered-tree enumeration and exact Speer weights;
//! * [`gaussian`] — interpolated covariances, Wick moments and the
//!   change-of-covariance machinery on a grid;
//! * [`model`] — the discretized interacting model: partition functions,
//!   the tree-expanded `Z~` objects and the fundamental identity;
//! * [`ksolver`] — the Kirkwood-Salzburg fixed point, operator-norm scans
//!   and the reconstruction of connected two-point functions.

pub mod cli;
pub mod covariance;
pub mod gaussian;
pub mod geometry;
pub mod ksolver;
pub mod model;
pub mod poly;
pub mod quadrature;
pub mod report;
pub mod trees;

use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capability exceeded: {0}")]
    Capability(String),
    #[error("singular input: {0}")]
    Singular(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver did not contract: {0}")]
    NonContraction(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Euclidean distance between two points given as coordinate slices.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}
