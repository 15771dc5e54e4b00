use alloc::string::String;
use core::fmt;

use crate::model::Station;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A prior or slot-weight vector is not a probability distribution.
    InvalidWeights(String),
    /// An outcome or sign value other than -1 or +1.
    CodomainViolation(i64),
    UnknownZooEntry(String),
    /// A setting of one station was handed to the other station.
    StationMismatch { expected: Station, found: Station },
    /// Structurally inconsistent model parts (table shapes, value ranges).
    InvalidModel(String),
    /// An argument outside the model's source space or grid.
    InvalidInput(String),
    EmptyTable,
    InvalidTolerance(f64),
    InfeasibleMean { target: f64, slots: usize },
    InfeasibleTarget { alpha: f64, beta: f64 },
    GridMismatch { expected: usize, found: usize },
    AlreadySigned,
    AlreadyDoubled,
    ZeroTrials,
    UnsupportedSize(usize),
    InvalidSchedule(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidWeights(msg) => write!(f, "invalid weights: {msg}"),
            Error::CodomainViolation(v) => write!(f, "codomain violation: {v} is not -1 or +1"),
            Error::UnknownZooEntry(name) => write!(f, "unknown zoo entry `{name}`"),
            Error::StationMismatch { expected, found } => {
                write!(f, "station mismatch: expected {expected} setting, got {found}")
            }
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::EmptyTable => f.write_str("joint table has no entries"),
            Error::InvalidTolerance(tol) => write!(f, "invalid tolerance {tol}: must be > 0"),
            Error::InfeasibleMean { target, slots } => {
                write!(f, "infeasible mean {target}: not of the form (2k-N)/N for N = {slots}")
            }
            Error::InfeasibleTarget { alpha, beta } => {
                write!(f, "infeasible marginal target {alpha} for base marginal {beta}")
            }
            Error::GridMismatch { expected, found } => {
                write!(f, "grid mismatch: model has {expected} slots, sign function has {found}")
            }
            Error::AlreadySigned => f.write_str("model already carries a sign function"),
            Error::AlreadyDoubled => f.write_str("model is already layer-doubled"),
            Error::ZeroTrials => f.write_str("monte carlo requires at least one trial"),
            Error::UnsupportedSize(n) => write!(f, "unsupported settings per side: {n}"),
            Error::InvalidSchedule(msg) => write!(f, "invalid schedule: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
