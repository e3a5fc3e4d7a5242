use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("antisymmetry violated at structure constant triple ({0}, {1}, {2})")]
    AntisymmetryViolation(usize, usize, usize),
    #[error("Jacobi identity violated at index triple ({0}, {1}, {2}), residual {3:e}")]
    JacobiViolation(usize, usize, usize, f64),
    #[error("lower central series does not reach zero: algebra is not nilpotent")]
    NotNilpotent,
    #[error("structure constants are not an n*n*n array (got {0} entries for dim {1})")]
    BadShape(usize, usize),
    #[error("matrix is not diagonalizable over the reals")]
    NotDiagonalizable,
    #[error("matrix has a nonpositive or nonreal eigenvalue {0:?}")]
    NonpositiveEigenvalue(f64),
    #[error("derivation identity fails on basis pair ({0}, {1}), residual {2:e}")]
    NotDerivation(usize, usize, f64),
    #[error("matrix is singular (|det| = {0:e})")]
    SingularMatrix(f64),
    #[error("dilation scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("negative side length in box: axis {0}")]
    NegativeSideLength(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quasi-norm solver failed to bracket a root for |x| = {0:e}")]
    SolverBracketFailure(f64),
    #[error("matrix not normalized to minimum eigenvalue 1 (v1 = {0})")]
    NotNormalized(f64),
    #[error("grid specs do not match")]
    GridMismatch,
    #[error("requested sample lies outside the source grid and the source does not vanish at its boundary")]
    GridCoverage,
    #[error("scale ladder is empty")]
    LadderEmpty,
    #[error("supports B(x1,eps) and B(e,theta) overlap")]
    BallsOverlap,
    #[error("support ball B(x1,eps) is not contained in B(e,R)")]
    SupportNotCovered,
    #[error("moment matrix is rank deficient ({rank} < {needed}); grid too coarse")]
    MomentSolveSingular { rank: usize, needed: usize },
    #[error("atom validation failed: {0}")]
    ValidationFailure(String),
    #[error("matrix is not admissible: {0}")]
    NotAdmissible(String),
    #[error("blow-up configuration infeasible: {0}")]
    ConfigInfeasible(String),
    #[error("invalid config field `{0}`: {1}")]
    ConfigInvalid(String, String),
    #[error("pipeline stage `{0}` failed: {1}")]
    PipelineStageFailure(String, String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

pub type Result<T> = std::result::Result<T, Error>;
