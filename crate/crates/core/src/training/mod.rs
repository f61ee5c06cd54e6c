//! Adam optimization, the epoch loop with validation-based model selection,
//! evaluation metrics and checkpoint files.

mod checkpoint;
mod evaluate;
mod optimizer;
mod trainer;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
    FORMAT_VERSION, MAGIC,
};
pub use evaluate::{evaluate, evaluate_checkpoint, evaluate_losses, predict, EvalOptions, Evaluation};
pub use optimizer::{adam_step, AdamConfig, OptimizerState, StepStats};
pub use trainer::{
    format_summary, train, train_step, EpochSummary, StepRecord, StepResult, TrainData, TrainOptions, TrainOutcome,
    TrainReport,
};

use crate::autodiff::TensorError;
use crate::data::DataError;
use crate::losses::LossError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite gradient in parameter {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("gradient for {name}: expected shape {expected:?}, found {found:?}")]
    GradientShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}, step {step}: {cause}{}", last_good(.checkpoint))]
    Diverged {
        epoch: usize,
        step: u64,
        checkpoint: Option<PathBuf>,
        cause: Box<TrainError>,
    },
    #[error("label {label} outside {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("dataset has {data} classes but the model predicts {model}")]
    ClassCountMismatch { model: usize, data: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid option {field}: {reason}")]
    InvalidOption { field: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn last_good(checkpoint: &Option<PathBuf>) -> String {
    match checkpoint {
        Some(p) => format!(" (last good checkpoint kept at {})", p.display()),
        None => String::new(),
    }
}
