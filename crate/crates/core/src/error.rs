use thiserror::Error;

use crate::model::NormEstimate;
use crate::power::WarmStartState;

pub type Result<T> = std::result::Result<T, SpecNormError>;

#[derive(Debug, Clone, Error)]
pub enum SpecNormError {
    #[error("input is empty")]
    EmptyInput,

    #[error("kernel extent {extent} along axis {axis} is even; only 2p+1 extents are supported")]
    EvenKernelExtent { axis: usize, extent: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite entry at flat index {index}")]
    NonFiniteEntry { index: usize },

    #[error("unsupported dimensionality {0}; expected 1, 2 or 3")]
    UnsupportedDimensionality(usize),

    #[error("target extents {target:?} are smaller than source extents {source_extents:?}")]
    TargetTooSmall {
        source_extents: Vec<usize>,
        target: Vec<usize>,
    },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("power method did not converge: residual {} after {} iterations", .estimate.residual, .estimate.iterations)]
    NonConvergence {
        estimate: NormEstimate,
        state: WarmStartState,
    },

    #[error("power iterate collapsed to the zero vector")]
    ZeroVector,

    #[error("kernel has zero spectral norm; normalization is undefined")]
    ZeroNormKernel,

    #[error("layer has no scaling policy")]
    MissingPolicy,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}
