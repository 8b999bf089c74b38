//! Spectral norms of depthwise separable convolutions.
//!
//! * [`dft_norm`]: exact circulant norms and zero-padded depthwise upper
//!   bounds from one FFT per channel.
//! * [`power`]: power iteration with residual stopping and warm starts,
//!   including the connectivity-matrix shortcut for pointwise convolutions.
//! * [`oracle`]: dense and matrix-free reference operators with SVD norms.
//! * [`normalizer`]: spectral normalization, hard/soft scaling, chain bounds.

pub mod dft_norm;
pub mod error;
pub mod model;
pub mod normalizer;
pub mod oracle;
pub mod power;
pub mod rng;
pub mod tensor;

pub use error::{Result, SpecNormError};
pub use model::{
    random_gaussian_filters, validate_filter_bank, ConnectivityMatrix, FeatureGeometry, FilterBank,
    NormEstimate, NormMethod, PaddingMode, ScalingPolicy,
};
pub use power::{LinearOperator, PowerConfig, WarmStartState};
pub use tensor::Tensor;
