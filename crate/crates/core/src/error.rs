use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate neuron {neuron}: augmented weight vector has zero norm")]
    DegenerateNeuron { neuron: usize },

    #[error("layer {layer} has no non-degenerate neurons")]
    EmptyLayer { layer: usize },

    #[error("degenerate energy decomposition: {0}")]
    DegenerateDecomposition(&'static str),

    #[error(
        "dataset file {} not found; download it manually and place it at that path ({instructions})",
        path.display()
    )]
    MissingDataset { path: PathBuf, instructions: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::Divergence { .. } => "divergence",
            Error::Parse { .. } => "parse",
            Error::Shape(_) => "shape",
            Error::DegenerateNeuron { .. } => "degenerate_neuron",
            Error::EmptyLayer { .. } => "empty_layer",
            Error::DegenerateDecomposition(_) => "degenerate_decomposition",
            Error::MissingDataset { .. } => "missing_dataset",
            Error::Io { .. } => "io",
        }
    }
}
