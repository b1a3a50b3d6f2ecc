use thiserror::Error;

use crate::model::BasisLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state {label} needs more photons than the truncation n_max = {n_max}")]
    Truncation { label: BasisLabel, n_max: u32 },

    #[error("population {population:e} reached the truncation edge at t = {time}")]
    TruncationOverflow { population: f64, time: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("unknown basis label {0}")]
    UnknownLabel(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("eigenvector continuation is ambiguous near t = {time}; use at least {suggested_points} grid points")]
    Refinement { time: f64, suggested_points: usize },

    #[error("couplings never cross: {0}")]
    NoCrossing(String),

    #[error("couplings are equal at every time (delta = 0, epsilon = 1)")]
    DegenerateEverywhere,

    #[error("dark state undefined: both couplings vanish")]
    UndefinedDirection,

    #[error("wrong propagator: {0}")]
    WrongPropagator(String),

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("evolution is not adiabatic: leakage {leakage:.3e}")]
    NonAdiabatic { leakage: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("empty subsystem selection")]
    EmptySelection,

    #[error("unknown regime tag {0:?}")]
    UnknownRegime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
