//! The STREAM network: two ST-Conv modules (temporal convolution,
//! heterogeneous graph attention, temporal convolution) and a linear output
//! layer, trained to reproduce slice adjacency through embedding cosines.

mod checkpoint;
mod config;
pub mod layers;
mod model;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MaskSpec, MANIFEST_FILE, PARAMS_FILE};
pub use config::{Init, Optimizer, Pooling, StreamConfig};
pub use model::{
    embed_frames, embed_slice, forward_frame, pool_frames, prepare_frames, register, similarity_loss, PathContext,
    SliceContext,
};
pub use params::StreamParams;
pub use train::{embed_kg, embed_view, train, train_from, TrainReport};

use crate::graph::GraphError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("invalid stream config: {0}")]
    ConfigInvalid(String),
    #[error("parameters do not match the configuration: {0}")]
    ParamMismatch(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
