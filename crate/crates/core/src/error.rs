use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid space spec: {0}")]
    InvalidSpec(String),

    #[error("operator shape mismatch: matrix is {rows}x{cols}, spaces need {cod_dim}x{dom_dim}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        cod_dim: usize,
        dom_dim: usize,
    },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("dimension {dim} exceeds the limit {max} for this method")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("tail cutoff {cutoff} exceeds domain dimension {dim}")]
    TailCutoff { cutoff: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis is singular or linearly dependent (reciprocal condition {rcond:e})")]
    SingularBasis { rcond: f64 },

    #[error("sequence is not nested: max |S_m S_n - S_n| = {defect:e}")]
    NotNested { defect: f64 },

    #[error("operator is zero; normalization undefined")]
    ZeroOperator,

    #[error("not a projection: max |P^2 - P| = {defect:e}")]
    NotAProjection { defect: f64 },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("{blocks} blocks exceed the exhaustive limit {max}")]
    TooManyBlocks { blocks: usize, max: usize },

    #[error("net too coarse: approximation needs distance below {required:e}, net achieves {achieved:e}")]
    NetTooCoarse { required: f64, achieved: f64 },

    #[error("factor of norm {norm} lies outside the unit ball the net covers")]
    FactorOutsideBall { norm: f64 },

    #[error("no block prefix clears the threshold {threshold} (best prefix norm {best})")]
    NoThresholdCrossing { threshold: f64, best: f64 },

    #[error("frame hypothesis violated: {0}")]
    FrameHypothesis(String),

    #[error("norm mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("target vector lies in the subspace (distance {distance:e})")]
    TargetInSubspace { distance: f64 },

    #[error("point {index} is not in the subspace (residual {residual:e})")]
    PointOutsideSubspace { index: usize, residual: f64 },
}
