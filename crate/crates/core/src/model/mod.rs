//! The clustering classifier: parameters, configuration and forward pass.

mod config;
mod network;
mod params;

use thiserror::Error;

pub use config::ModelConfig;
pub use network::{
    argmax, classify, cluster_assign, compose_clusters, embed, encode, forward, gate_and_aggregate, infer,
    lstm_direction, ForwardGraph, ForwardOutput, Gated, RowLayout,
};
pub use params::{Param, ParamVars, Parameters};

use crate::autodiff::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("expected {expected} parameter tensors, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("token index {index} outside vocabulary of {vocab_size}")]
    TokenOutOfRange { index: usize, vocab_size: usize },
}
