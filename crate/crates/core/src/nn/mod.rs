//! The convolutional tagger and its building blocks.

mod config;
mod io;
pub mod layers;
mod model;
mod tensor;

pub use config::{ConfigError, ModelConfig};
pub use io::{load_model, read_model, save_model, write_model, ModelFileError, FORMAT_VERSION, MAGIC};
pub use layers::{maxpool, Activation, ConvBranch, ConvLayer, DenseLayer, Pooled};
pub use model::{predict, ForwardCache, Gradients, Model};
pub use tensor::{relu, sigmoid, Tensor};

use crate::embedding::EmbeddingError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("input of length {len} is shorter than filter width {width}")]
    InputTooShort { len: usize, width: usize },
    #[error("non-finite value in tensor")]
    NonFinite,
}
