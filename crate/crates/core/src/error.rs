use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("zero pivot at elimination step {index}")]
    ZeroPivot { index: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid pore shape alpha={alpha}, beta={beta}")]
    InvalidPore { alpha: f64, beta: f64 },
    #[error("no valid pore after {attempts} rejection attempts")]
    RejectionExhausted { attempts: usize },
    #[error("meshing failed at pore {pore}: {reason}")]
    Meshing { pore: usize, reason: String },
    #[error("bad mesh parameters: {0}")]
    Parameters(String),
    #[error("mesh parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("element {triangle} inverted (det F = {det})")]
    ElementInversion { triangle: usize, det: f64 },
    #[error("solution is not converged")]
    NotConverged,
    #[error("linear solve failed after regularization: {0}")]
    Linear(#[from] LinalgError),
    #[error("boundary data mismatch: {0}")]
    Boundary(String),
    #[error("invalid material: {0}")]
    Material(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("need at least 4 control points per edge, got {0}")]
    TooFewControlPoints(usize),
    #[error("vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("mesh vertex {0} is marked as outer boundary but lies off the square")]
    OffBoundary(usize),
    #[error("spline system: {0}")]
    Linear(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("record {record} has a non-finite target")]
    NonFiniteTarget { record: usize },
    #[error("record {record} has dimension {got}, model expects {expected}")]
    Dimension { record: usize, got: usize, expected: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("record {index} is invalid: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("dataset record {index} is corrupt: {reason}")]
    Corrupt { index: usize, reason: String },
    #[error("dataset I/O: {0}")]
    Io(String),
    #[error("collector aborted after {failures} consecutive solver failures")]
    TooManyFailures { failures: usize },
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Composer(#[from] ComposerError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposerError {
    #[error("bad assembly: {0}")]
    Assembly(String),
    #[error("every schedule failed for mesh fidelity {fidelity}")]
    BaselineFailed { fidelity: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}
