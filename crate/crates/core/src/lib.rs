//! Phase-space probability measures `dμ_φ = |φ(x)|²|φ̂(k)|² dx dk` on
//! spectral grids, with energy functionals, ground-state solvers,
//! concentration bounds and eigenvalue sums.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod cli;
pub mod concentration;
pub mod config;
pub mod eigen;
pub mod error;
pub mod expr;
pub mod grid;
pub mod output;
pub mod poly;
pub mod quadrature;
pub mod states;
pub mod sums;
pub mod variational;

pub use error::{Error, Result};
