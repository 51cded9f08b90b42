//! Bayesian quickest change detection from compressive linear measurements.
//!
//! * [`sensing`]: random sensing-matrix families, row-space projections,
//!   matched filters and Gram spectra.
//! * [`detector`]: the Shiryaev statistic in log domain, with a direct-sum
//!   reference implementation.
//! * [`theory`]: closed-form delay brackets, delay-ratio brackets and the
//!   measurement planner.
//! * [`montecarlo`]: reproducible parallel simulation of ADD and PFA.
//! * [`cli`]: experiment configuration and the `cqcd` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detector;
pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod sensing;
pub mod theory;

pub use error::{Error, Result};
