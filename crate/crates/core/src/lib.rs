//! Simulation and analysis of repeated non-destructive parity measurements
//! on a three-spin register read out through an electron ancilla.
//!
//! The crate is organized bottom-up:
//!
//! * [`qmat`]: dense complex matrices, states, partial trace, fidelity;
//! * [`pauli`]: signed Pauli strings and the named observables;
//! * [`instrument`]: channels, ideal and noisy parity instruments;
//! * [`sequencer`]: phase-branched and phase-echoed control sequences;
//! * [`calibration`]: noise parameters, repeated-readout model and fitting;
//! * [`experiments`]: GHZ generation, single-shot GHZ, contextuality test,
//!   Zeno study and statistics.

pub mod calibration;
pub mod error;
pub mod experiments;
pub mod instrument;
pub mod pauli;
pub mod qmat;
pub mod sequencer;

pub use error::{Error, Result};
