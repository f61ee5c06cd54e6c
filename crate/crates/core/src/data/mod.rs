//! Corpus ingestion, vocabulary, pretrained embeddings, batching and
//! validation splitting.

mod batch;
mod corpus;
mod embeddings;
mod split;
pub mod synthetic;
mod tokenize;
mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use batch::{make_batches, Batch, BatchOptions, Batches};
pub use corpus::{load_corpus, parse_corpus, Corpus, CorpusFormat, TextRecord};
pub use embeddings::{load_embeddings, read_embeddings, EmbeddingTable, LoadedEmbeddings, OOV_INIT_RANGE};
pub use split::{split_validation, Labelled, Split};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// Token indices and a 0-based class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: usize,
}

impl Example {
    pub fn new(tokens: Vec<usize>, label: usize) -> Self {
        Example { tokens, label }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: class {label} outside 1..={}", n_classes.map_or("?".to_string(), |n| n.to_string()))]
    LabelOutOfRange {
        line: u64,
        label: usize,
        n_classes: Option<usize>,
    },
    #[error("embedding line {line}: expected {expected} values, found {found}")]
    EmbeddingDim { line: u64, expected: usize, found: usize },
    #[error("embedding line {line}: {reason}")]
    EmbeddingLine { line: u64, reason: String },
    #[error("embedding file has no vectors")]
    EmptyEmbeddings,
    #[error("validation fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
}
