//! Noise configuration and readout calibration.

mod config;
mod fit;
mod records;

pub use config::*;
pub use fit::{fit_readout, FitOptions, FitReport, PARAM_NAMES, RECOMMENDED_TRIALS};
pub use records::{log_likelihood, pattern_probability, simulate_repeated_readout, Prepared, ReadoutRecords, Trial, ROUNDS};
