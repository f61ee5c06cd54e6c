//! Binary checkpoint: named f32 tensors followed by the model config and
//! the vocabulary listing.
//!
//! ```text
//! "LSCR" | version u32 | tensor count u32
//! per tensor: name len u32 | name utf-8 | rank u32 | dims u64 × rank | values f32 × n
//! config len u32 | config TOML utf-8
//! token count u32 | per token: len u32 | utf-8
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autodiff::{ParamSet, Tensor};
use crate::data::Vocabulary;
use crate::model::{ModelConfig, ModelError, Parameters};

pub const MAGIC: &[u8; 4] = b"LSCR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint: bad magic bytes {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },
    #[error("checkpoint tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Everything needed to rebuild a trained model.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Parameters<f32>,
    pub vocab: Vocabulary,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        save_checkpoint(&self.params, &self.config, &self.vocab, path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        load_checkpoint(path)
    }
}

pub fn encode_checkpoint(params: &Parameters<f32>, config: &ModelConfig, vocab: &Vocabulary) -> Vec<u8> {
    let set = params.set();
    let mut out = Vec::with_capacity(16 + set.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, set.len() as u32);
    for (name, t) in set.iter() {
        put_str(&mut out, name);
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let config_text = toml::to_string(config).expect("model config serializes");
    put_str(&mut out, &config_text);
    put_u32(&mut out, vocab.len() as u32);
    for tok in vocab.tokens() {
        put_str(&mut out, tok);
    }
    out
}

/// Writes through a temporary sibling file and renames it into place, so an
/// interrupted save never clobbers an earlier checkpoint.
pub fn save_checkpoint(
    params: &Parameters<f32>,
    config: &ModelConfig,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(params, config, vocab);
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, &bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic { found: magic.to_vec() });
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32("tensor count")? as usize;
    let mut set = ParamSet::new();
    for i in 0..count {
        let name = r.string(&format!("name of tensor {i}"))?;
        if set.index_of(&name).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate tensor {name}")));
        }
        let rank = r.u32(&format!("rank of {name}"))? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64(&format!("shape of {name}"))? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("shape of {name} overflows")))?;
        let raw = r.take(n.saturating_mul(4), &format!("values of {name}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(format!("tensor {name}: {e}")))?;
        set.push(name, tensor);
    }
    let config_text = r.string("model config")?;
    let config: ModelConfig =
        toml::from_str(&config_text).map_err(|e| CheckpointError::Malformed(format!("model config: {e}")))?;
    let n_tokens = r.u32("vocabulary size")? as usize;
    let mut listing = Vec::with_capacity(n_tokens.min(1 << 20));
    for i in 0..n_tokens {
        listing.push(r.string(&format!("vocabulary entry {i}"))?);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let vocab = Vocabulary::from_listing(listing).map_err(CheckpointError::Malformed)?;
    if vocab.len() != config.vocab_size {
        return Err(CheckpointError::Malformed(format!(
            "vocabulary has {} entries but config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    let params = Parameters::from_set(&config, set).map_err(|e| match e {
        ModelError::ParamShape { name, expected, found } => CheckpointError::ShapeMismatch { name, expected, found },
        other => CheckpointError::Malformed(other.to_string()),
    })?;
    Ok(Checkpoint { config, params, vocab })
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'b [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { what: what.to_string() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, CheckpointError> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Malformed(format!("{what} is not UTF-8")))
    }
}
