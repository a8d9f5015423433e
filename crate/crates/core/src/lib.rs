//! Equivalent-circuit state estimation for power grids.
//!
//! Measurements are turned into circuit elements: PMUs into a conductance in
//! series with a current source, RTUs into an admittance matching the
//! measured power at the measured voltage magnitude. The state estimate is
//! the network solution that minimizes the weighted distance to PMU voltages
//! plus the weighted size of the RTU slack terms.

pub mod case;
pub mod case_io;
pub mod casegen;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod linear_se;
pub mod montecarlo;
pub mod network;
pub mod nonlinear_se;
pub mod powerflow;
pub mod rng;
pub mod selftest;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
