//! Interface eigenmodes of finite dimer chains of subwavelength resonators.
//!
//! The chain geometry is reduced to its tridiagonal capacitance matrix, whose
//! spectrum gives the leading-order resonant frequencies. The crate solves that
//! spectrum, checks it against the closed forms available for 2-Toeplitz
//! matrices, locates and characterizes the mode in the spectral gap, and runs
//! perturbation and topological diagnostics on it.

pub mod capacitance;
pub mod chebyshev;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod oracle;
pub mod solver;
pub mod gap;
pub mod stability;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
