use std::path::{Path, PathBuf};

use wdkg::graph::GraphError;
use wdkg::linkpred::LinkPredError;
use wdkg::select::SelectError;
use wdkg::stream::StreamError;
use wdkg::synth::SynthError;

/// Command failure; validation problems exit 1, runtime problems exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::MissingArtifact(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

/// Fails with `MissingArtifact` unless `path` exists.
pub fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.to_path_buf()))
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::ConfigInvalid(_)
            | StreamError::ParamMismatch(_)
            | StreamError::Checkpoint { .. }
            | StreamError::Graph(_) => CliError::Invalid(e.to_string()),
            StreamError::Diverged { .. } | StreamError::Tensor(_) | StreamError::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<LinkPredError> for CliError {
    fn from(e: LinkPredError) -> Self {
        match e {
            LinkPredError::InsufficientNonEdges { .. } | LinkPredError::InvalidArgument(_) => {
                CliError::Invalid(e.to_string())
            }
            LinkPredError::EmptyTestSet => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Tensor(_) => CliError::Runtime(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
