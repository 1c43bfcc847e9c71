use thiserror::Error;

/// Errors raised by state construction, channels, thermodynamic steps and
/// protocol handling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("layout conflict: {0}")]
    LayoutConflict(String),
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("operator is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("invalid density state: {0}")]
    InvalidState(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("apparatus `{0}` is not in its ready state")]
    ApparatusNotReady(String),
    #[error("compressing occupied chamber {0} to zero volume")]
    Singularity(String),
    #[error("chamber {0} is empty; use a vacuum compression")]
    EmptyChamber(String),
    #[error("chamber {0} is occupied")]
    OccupiedChamber(String),
    #[error("particle position is not known from any record")]
    UnknownPosition,
    #[error(
        "no unitary maps the records of `{apparatus}` to ready (Gram discrepancy {discrepancy:.6})"
    )]
    ResetInfeasible { apparatus: String, discrepancy: f64 },
    #[error("volume mismatch: {0}")]
    VolumeMismatch(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid protocol: {0}")]
    Validation(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
