use thiserror::Error;

use crate::qmat::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix of {rows}x{cols} exceeds the 65536-entry limit")]
    Oversized { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("qubit count {0} outside the supported range 1..=4")]
    QubitCount(usize),

    #[error("invalid qubit selection: {0}")]
    QubitSelection(String),

    #[error("not a density matrix: {}", format_violations(.0))]
    NotDensity(Vec<Violation>),

    #[error("cannot parse Pauli string {text:?}: {reason}")]
    PauliParse { text: String, reason: String },

    #[error("Pauli strings act on {left} and {right} qubits")]
    RegisterMismatch { left: usize, right: usize },

    #[error("{0} has no +1/-1 eigenspace split")]
    NotMeasurable(String),

    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: String, value: f64 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("invalid readout model: {0}")]
    InvalidReadout(String),

    #[error("schedule length {0} outside 1..=8")]
    ScheduleLength(usize),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("numerical invariant violated: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn probability(name: impl Into<String>, value: f64) -> Self {
        Error::Probability {
            name: name.into(),
            value,
        }
    }

    /// True for failures of internal numerical consistency, as opposed to
    /// bad user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NotDensity(_))
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks that `value` is a probability, naming it in the error.
pub(crate) fn check_probability(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::probability(name, value))
    }
}
