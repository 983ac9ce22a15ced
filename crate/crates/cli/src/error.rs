use ces_core::{BasisError, ComposerError, FemError, GeometryError, PipelineError, SurrogateError};
use thiserror::Error;

/// Command failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Meshing { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Material(_) | FemError::Boundary(_) => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Diverged { .. } => CliError::Solver(e.to_string()),
            SurrogateError::Checkpoint(_) => CliError::Io(e.to_string()),
            SurrogateError::Basis(b) => b.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ComposerError> for CliError {
    fn from(e: ComposerError) -> Self {
        match e {
            ComposerError::BaselineFailed { .. } => CliError::Solver(e.to_string()),
            ComposerError::Fem(f) => f.into(),
            ComposerError::Geometry(g) => g.into(),
            ComposerError::Basis(b) => b.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io(_) | PipelineError::Corrupt { .. } => CliError::Io(e.to_string()),
            PipelineError::TooManyFailures { .. } => CliError::Solver(e.to_string()),
            PipelineError::Fem(f) => f.into(),
            PipelineError::Geometry(g) => g.into(),
            PipelineError::Basis(b) => b.into(),
            PipelineError::Surrogate(s) => s.into(),
            PipelineError::Composer(c) => c.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
