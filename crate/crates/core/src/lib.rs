//! Nonuniform L1-type discretizations of the Caputo derivative and their
//! use in energy-stable time stepping for the time-fractional Cahn-Hilliard
//! equation.

// negated comparisons are used on purpose so that NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod quadform;
pub mod solver;
pub mod special;
pub mod spectral;
pub mod timemesh;

pub use error::{Error, Result};
pub use kernels::{
    check_criteria, CompanionKernels, CriteriaReport, CriteriaVariant, KernelFamily, KernelRow, KernelTable,
};
pub use solver::{ModelParams, Scheme, Solver, SolverOptions};
pub use spectral::{Field2D, Grid2D};
pub use timemesh::TimeMesh;
