//! Error type shared by every module.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("total weights differ on the full plane: {left} vs {right}")]
    WeightMismatch { left: f64, right: f64 },
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("vortex {0} lies outside the domain")]
    OutsideDomain(usize),
    #[error("vortices {0} and {1} coincide")]
    CoincidentVortices(usize, usize),
    #[error("evaluation point coincides with vortex {0}")]
    EvaluationAtVortex(usize),
    #[error("renormalized energy not available for {0}")]
    UnsupportedDomain(String),
    #[error("Thomas-Fermi iteration stalled after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("density became non-positive during relaxation")]
    NonPositiveDensity,
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("linear solver failed: {0}")]
    LinearSolveFailure(String),
    #[error("field blew up at t = {t}: max |w| = {max_modulus}")]
    BlowupDetected { t: f64, max_modulus: f64 },
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("vortex core at ({x}, {y}) is not resolved by the grid")]
    UnresolvedCore { x: f64, y: f64 },
    #[error("ODE solver failure: {0}")]
    SolverFailure(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tags errors with the pipeline stage that produced them.
pub(crate) trait StageExt<T> {
    fn stage(self, name: impl Into<String>) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: impl Into<String>) -> Result<T> {
        self.map_err(|e| Error::Stage { stage: name.into(), source: Box::new(e) })
    }
}
