use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("triangle {triangle} is not counter-clockwise (signed area {area:e})")]
    Orientation { triangle: usize, area: f64 },

    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("non-conforming mesh: {0}")]
    NonConforming(String),

    #[error("boundary flag mismatch: {0}")]
    BoundaryFlags(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("partition of unity denominator {denominator:e} too small at query point")]
    DegeneratePoint { denominator: f64 },

    #[error("linear system has no solution: {0}")]
    NoSolution(String),

    #[error("boundary basis is rank deficient: {0}")]
    BoundaryRankDeficient(String),

    #[error("training diverged at step {step}: non-finite gradient at parameter {index}")]
    TrainingDiverged { step: usize, index: usize },

    #[error("training diverged at step {step}: non-finite loss")]
    NonFiniteLoss { step: usize },

    #[error("problem has no exact solution")]
    MissingExactSolution,

    #[error("problem has no Dirichlet data")]
    MissingDirichletData,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config mismatch on keys: {}", keys.join(", "))]
    ConfigMismatch { keys: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
