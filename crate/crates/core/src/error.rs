use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tone set must contain at least one tone")]
    EmptyToneSet,

    #[error("tone index 0 is not allowed (tones are nonzero harmonics of the base detuning)")]
    ZeroTone,

    #[error("duplicate tone index {0}")]
    DuplicateTone(i64),

    #[error("{family} design needs at least {min} tones, got {got}")]
    TooFewTones {
        family: &'static str,
        min: usize,
        got: usize,
    },

    #[error("constraint system has a {0}-dimensional null space, expected exactly 1")]
    DegenerateNullSpace(usize),

    #[error("amplitudes cannot be normalized: sum of r^2/n is {0}")]
    NotNormalizable(f64),

    #[error("amplitude count {amplitudes} does not match tone count {tones}")]
    LengthMismatch { tones: usize, amplitudes: usize },

    #[error("normalization violated: sum of r^2/n = {0}")]
    NormalizationViolated(f64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("series did not converge within {0} terms")]
    SeriesNonConvergence(usize),

    #[error("carrier series diverges: 2 n eta Omega / nu = {0} >= 1")]
    DivergentCarrierSeries(f64),

    #[error("Fock truncation leakage {leakage:.3e} exceeds the limit; increase n_max (currently {n_max})")]
    TruncationLeakage { leakage: f64, n_max: usize },

    #[error("initial Fock state {fock} leaves less than 5 levels of headroom below n_max = {n_max}")]
    InsufficientHeadroom { fock: usize, n_max: usize },

    #[error("time stepping did not converge to {tolerance:e} after {steps} steps")]
    StepNotConverged { tolerance: f64, steps: usize },

    #[error("thermal ensemble discards weight {discarded:.3e} at Fock cutoff {cutoff}")]
    EnsembleTruncation { discarded: f64, cutoff: usize },

    #[error("invalid scan spec: {0}")]
    InvalidScan(String),

    #[error("fit needs at least 5 points above the infidelity floor, found {0}")]
    InsufficientPoints(usize),

    #[error("grid is not symmetric about zero: {0}")]
    AsymmetricGrid(String),

    #[error("no rows for design {0}")]
    UnknownDesign(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
