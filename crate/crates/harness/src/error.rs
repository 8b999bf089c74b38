use std::path::PathBuf;

use specnorm_core::SpecNormError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("cannot parse bundle {path}: {message}")]
    BundleParse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("layer {layer}: declared {declared} elements but blob holds {found}")]
    ShapeMismatch {
        layer: String,
        declared: usize,
        found: usize,
    },

    #[error("layer {layer}: kernel has zero spectral norm")]
    ZeroNormKernel { layer: String },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: String,
        #[source]
        source: SpecNormError,
    },

    #[error(transparent)]
    Core(#[from] SpecNormError),

    #[error("output: {0}")]
    Output(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_layer(layer: &str, source: SpecNormError) -> Self {
        match source {
            SpecNormError::ZeroNormKernel => Self::ZeroNormKernel {
                layer: layer.to_string(),
            },
            source => Self::Layer {
                layer: layer.to_string(),
                source,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        let core = match self {
            Self::Usage(_) => return EXIT_USAGE,
            Self::Layer { source, .. } | Self::Core(source) => source,
            _ => return EXIT_DATA,
        };
        match core {
            SpecNormError::NonConvergence { .. }
            | SpecNormError::ZeroVector
            | SpecNormError::NumericalFailure(_) => EXIT_NUMERICAL,
            SpecNormError::InvalidConfig(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}
