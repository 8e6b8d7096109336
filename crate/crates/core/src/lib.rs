//! Simulation and analysis of shelving-style quantum non-demolition
//! phonon-number measurement in two-mode optomechanics.
//!
//! Module map:
//! * [`fock`]: truncated three-mode Fock spaces and operators,
//! * [`model`]: rotating-frame Hamiltonian, Lindblad channels, Liouvillians,
//! * [`propagate`]: spectral time evolution, steady states, two-time correlators,
//! * [`spin`]: the effective-spin reduction and its analytic rates,
//! * [`measure`]: homodyne record, phonon-number estimators and QND margins,
//! * [`cli`]: scenario runner writing CSV and text reports.

pub mod error;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod propagate;
pub mod measure;
pub mod spin;
pub mod cli;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

extern crate blas_src;
