use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::{DataError, Vocabulary, PAD};
use crate::autodiff::Tensor;

/// Range of the uniform draw for rows missing from the pretrained file.
pub const OOV_INIT_RANGE: f32 = 0.05;

/// `|V|×d_e` embedding matrix. Row 0 (PAD) is always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Tensor<f32>,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Every row except PAD drawn uniformly from ±[`OOV_INIT_RANGE`].
    pub fn random<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut data = vec![0.0f32; vocab_size * dim];
        for v in data[dim..].iter_mut() {
            *v = rng.gen_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE);
        }
        EmbeddingTable {
            weights: Tensor::new(vec![vocab_size, dim], data).expect("embedding shape"),
            trainable: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.shape()[0]
    }
}

#[derive(Clone, Debug)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    /// matched / (|V| − 2)
    pub coverage: f64,
}

/// Reads `token v1 ... vd` lines. Vocabulary rows found in the file are
/// copied; the rest are drawn from `rng`. When `dim` is `None` it is taken
/// from the first line.
pub fn load_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocabulary,
    dim: Option<usize>,
    rng: &mut R,
) -> Result<LoadedEmbeddings, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_embeddings(BufReader::new(file), vocab, dim, rng)
}

pub fn read_embeddings<B: BufRead, R: Rng>(
    reader: B,
    vocab: &Vocabulary,
    dim: Option<usize>,
    rng: &mut R,
) -> Result<LoadedEmbeddings, DataError> {
    let mut dim = dim;
    let mut found: Vec<Option<Vec<f32>>> = vec![None; vocab.len()];

    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| DataError::EmbeddingLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n', ' ']);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        let values: Vec<&str> = parts.collect();
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(DataError::EmbeddingDim {
                line: line_no,
                expected,
                found: values.len(),
            });
        }
        if !vocab.contains(token) {
            continue;
        }
        let ix = vocab.lookup(token);
        if ix == PAD || found[ix].is_some() {
            continue;
        }
        let row = values
            .iter()
            .map(|v| v.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DataError::EmbeddingLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        found[ix] = Some(row);
    }

    let dim = dim.ok_or(DataError::EmptyEmbeddings)?;
    if dim == 0 {
        return Err(DataError::EmptyEmbeddings);
    }
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);
    let mut matched = 0usize;
    let data = table.weights.data_mut();
    for (ix, row) in found.into_iter().enumerate() {
        if let Some(row) = row {
            data[ix * dim..(ix + 1) * dim].copy_from_slice(&row);
            if ix >= 2 {
                matched += 1;
            }
        }
    }
    let regular = vocab.len().saturating_sub(2);
    let coverage = if regular == 0 {
        0.0
    } else {
        matched as f64 / regular as f64
    };
    Ok(LoadedEmbeddings { table, coverage })
}
