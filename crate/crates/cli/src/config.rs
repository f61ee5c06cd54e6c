//! Flat TOML run configuration with `key=value` overrides.

use std::path::{Path, PathBuf};

use lscr::model::ModelConfig;
use lscr::training::{AdamConfig, TrainOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the directory under which runs without an
/// explicit `output_dir` are written.
pub const OUTPUT_ROOT_ENV: &str = "LSCR_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{field}: file not found: {path}")]
    MissingFile { field: &'static str, path: PathBuf },
}

/// Every setting of a training run. Unset optional keys are absent from
/// the file; dimensions default to the full-size model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_name: String,
    /// CSV with a 1-based label column followed by text columns.
    pub train_path: PathBuf,
    pub validation_path: Option<PathBuf>,
    /// Held out from training when no validation file is given.
    pub validation_fraction: f64,
    pub test_path: Option<PathBuf>,
    pub has_header: bool,
    pub n_classes: Option<usize>,

    pub embeddings_path: Option<PathBuf>,
    pub freeze_embeddings: bool,
    pub min_freq: usize,
    /// Including `<pad>` and `<unk>`.
    pub max_vocab: Option<usize>,

    pub d_e: usize,
    pub d_h: usize,
    pub d_mlp: usize,
    pub m: usize,
    pub d_c: usize,
    pub d_cls: usize,
    pub lambda1: f64,
    pub lambda2: f64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub clip_norm: f64,

    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        RunConfig {
            run_name: "run".into(),
            train_path: PathBuf::new(),
            validation_path: None,
            validation_fraction: 0.1,
            test_path: None,
            has_header: false,
            n_classes: None,
            embeddings_path: None,
            freeze_embeddings: false,
            min_freq: 1,
            max_vocab: None,
            d_e: ModelConfig::DEFAULT_D_E,
            d_h: ModelConfig::DEFAULT_D_H,
            d_mlp: ModelConfig::DEFAULT_D_MLP,
            m: ModelConfig::DEFAULT_M,
            d_c: ModelConfig::DEFAULT_D_C,
            d_cls: ModelConfig::DEFAULT_D_CLS,
            lambda1: ModelConfig::DEFAULT_LAMBDA,
            lambda2: ModelConfig::DEFAULT_LAMBDA,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            clip_norm: adam.clip_norm.unwrap_or(0.0),
            seed: 1,
            epochs: TrainOptions::DEFAULT_EPOCHS,
            batch_size: TrainOptions::DEFAULT_BATCH_SIZE,
            max_len: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` on top and validates.
    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let base = path.and_then(Path::parent).map(Path::to_path_buf);
        let file_keys: Vec<String> = table.keys().cloned().collect();
        let mut overridden = Vec::new();
        for o in overrides {
            let (key, value) = parse_override(o)?;
            overridden.push(key.clone());
            table.insert(key, value);
        }
        let mut cfg = Self::from_table(table)?;
        if let Some(base) = base.filter(|b| !b.as_os_str().is_empty()) {
            let from_file = |k: &str| file_keys.iter().any(|f| f == k) && !overridden.iter().any(|o| o == k);
            cfg.rebase_paths(&base, from_file);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    fn rebase_paths(&mut self, base: &Path, from_file: impl Fn(&str) -> bool) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        if from_file("train_path") {
            fix(&mut self.train_path);
        }
        for (key, p) in [
            ("validation_path", &mut self.validation_path),
            ("test_path", &mut self.test_path),
            ("embeddings_path", &mut self.embeddings_path),
            ("output_dir", &mut self.output_dir),
        ] {
            if from_file(key) {
                if let Some(p) = p {
                    fix(p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason: &str| {
            Err(ConfigError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if self.train_path.as_os_str().is_empty() {
            return invalid("train_path", "is required");
        }
        for (field, v) in [
            ("d_e", self.d_e),
            ("d_h", self.d_h),
            ("d_mlp", self.d_mlp),
            ("m", self.m),
            ("d_c", self.d_c),
            ("d_cls", self.d_cls),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("min_freq", self.min_freq),
        ] {
            if v == 0 {
                return invalid(field, "must be at least 1");
            }
        }
        if self.max_len == Some(0) {
            return invalid("max_len", "must be at least 1");
        }
        if self.max_vocab.is_some_and(|v| v < 3) {
            return invalid(
                "max_vocab",
                "must leave room for at least one word besides <pad> and <unk>",
            );
        }
        if matches!(self.n_classes, Some(n) if n < 2) {
            return invalid("n_classes", "must be at least 2");
        }
        for (field, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(field, "must be a finite number >= 0");
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid("lr", "must be > 0");
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return invalid(field, "must lie in [0, 1)");
            }
        }
        if !(self.eps > 0.0) {
            return invalid("eps", "must be > 0");
        }
        if self.validation_path.is_none() && !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return invalid("validation_fraction", "must lie strictly between 0 and 1");
        }
        for (field, p) in [
            ("train_path", Some(&self.train_path)),
            ("validation_path", self.validation_path.as_ref()),
            ("test_path", self.test_path.as_ref()),
            ("embeddings_path", self.embeddings_path.as_ref()),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(ConfigError::MissingFile { field, path: p.clone() });
                }
            }
        }
        Ok(())
    }

    /// Makes every input path absolute so a snapshot of this config can be
    /// used from any working directory.
    pub fn absolutize(&mut self) {
        let abs = |p: &mut PathBuf| {
            if let Ok(c) = std::fs::canonicalize(&*p) {
                *p = c;
            } else if let Ok(cwd) = std::env::current_dir() {
                *p = cwd.join(&*p);
            }
        };
        abs(&mut self.train_path);
        for p in [
            &mut self.validation_path,
            &mut self.test_path,
            &mut self.embeddings_path,
        ]
        .into_iter()
        .flatten()
        {
            abs(p);
        }
    }

    pub fn model_config(&self, vocab_size: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_e: self.d_e,
            d_h: self.d_h,
            d_mlp: self.d_mlp,
            m: self.m,
            d_c: self.d_c,
            d_cls: self.d_cls,
            n_classes,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
        }
    }

    /// `output_dir` if set, otherwise `<root>/<run_name>` where the root comes
    /// from [`OUTPUT_ROOT_ENV`] or defaults to `runs`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match &self.output_dir {
            Some(d) => d.clone(),
            None => {
                let root = std::env::var_os(OUTPUT_ROOT_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
                root.join(&self.run_name)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Splits `key=value`; the value is read as a TOML value, falling back to a
/// plain string so `--set train_path=data/x.csv` needs no quoting.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(s.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(s.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}
