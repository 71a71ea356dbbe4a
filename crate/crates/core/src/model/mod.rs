//! The operation-wise attention network and its ablation variants.

mod config;
mod network;

pub use config::{AttentionMode, OpDescriptor, OpKind, OwanConfig};
pub use network::{build_network, names, AttentionRecord, ForwardPass, LayerOutput, Owan};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("group index {group} out of range ({groups} groups)")]
    GroupIndex { group: usize, groups: usize },

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),
}
