//! Python bindings.
//!
//! Texts can be passed either as raw strings, which are tokenized the same
//! way as corpus files, or as pre-tokenized lists of strings. Class labels
//! are 0-based throughout.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use lscr::analysis::{self, DEFAULT_TOP_K};
use lscr::data::synthetic::{SyntheticCorpus, SyntheticSpec};
use lscr::data::{self, make_batches, BatchOptions, Example};
use lscr::model::{self, infer, Parameters};
use lscr::rng::{stream_rng, Stream};
use lscr::training::{self, Checkpoint, EvalOptions, TrainData, TrainOptions};

create_exception!(
    lscr_py,
    LscrError,
    PyException,
    "Raised when training, inference or file I/O fails."
);

fn err(e: impl std::fmt::Display) -> PyErr {
    LscrError::new_err(e.to_string())
}

/// Round-trips any serializable value through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[derive(FromPyObject)]
enum Text {
    Raw(String),
    Tokens(Vec<String>),
}

impl Text {
    fn into_tokens(self) -> Vec<String> {
        match self {
            Text::Raw(s) => data::tokenize(&s),
            Text::Tokens(t) => t,
        }
    }
}

fn token_lists(texts: Vec<Text>) -> Vec<Vec<String>> {
    texts.into_iter().map(Text::into_tokens).collect()
}

/// Split a string into model tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    data::tokenize(text)
}

/// Token-to-index mapping with `<pad>` at 0 and `<unk>` at 1.
#[pyclass(module = "lscr_py", from_py_object)]
#[derive(Clone)]
struct Vocabulary {
    inner: data::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    /// Build from texts, keeping tokens seen at least `min_freq` times.
    /// `max_size` counts the two reserved entries.
    #[staticmethod]
    #[pyo3(signature = (texts, min_freq=1, max_size=None))]
    fn build(texts: Vec<Text>, min_freq: usize, max_size: Option<usize>) -> Self {
        let lists = token_lists(texts);
        Vocabulary {
            inner: data::Vocabulary::build(&lists, min_freq, max_size),
        }
    }

    #[staticmethod]
    fn from_tokens(tokens: Vec<String>) -> PyResult<Self> {
        let inner = data::Vocabulary::from_tokens(tokens).map_err(PyValueError::new_err)?;
        Ok(Vocabulary { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.inner.contains(token)
    }

    fn __repr__(&self) -> String {
        format!("Vocabulary(size={})", self.inner.len())
    }

    /// Index of `token`, or the `<unk>` index.
    fn lookup(&self, token: &str) -> usize {
        self.inner.lookup(token)
    }

    fn token(&self, index: usize) -> Option<String> {
        self.inner.token(index).map(str::to_string)
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    fn encode(&self, text: Text) -> Vec<usize> {
        self.inner.encode(&text.into_tokens())
    }

    fn decode(&self, indices: Vec<usize>) -> Vec<String> {
        self.inner.decode(&indices).into_iter().map(str::to_string).collect()
    }
}

/// Network dimensions and regularizer weights. Omitted dimensions take the
/// full-size defaults.
#[pyclass(module = "lscr_py", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct ModelConfig {
    vocab_size: usize,
    n_classes: usize,
    d_e: usize,
    d_h: usize,
    d_mlp: usize,
    m: usize,
    d_c: usize,
    d_cls: usize,
    lambda1: f64,
    lambda2: f64,
}

impl From<&model::ModelConfig> for ModelConfig {
    fn from(c: &model::ModelConfig) -> Self {
        ModelConfig {
            vocab_size: c.vocab_size,
            n_classes: c.n_classes,
            d_e: c.d_e,
            d_h: c.d_h,
            d_mlp: c.d_mlp,
            m: c.m,
            d_c: c.d_c,
            d_cls: c.d_cls,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
        }
    }
}

impl ModelConfig {
    fn core(&self) -> model::ModelConfig {
        model::ModelConfig {
            vocab_size: self.vocab_size,
            d_e: self.d_e,
            d_h: self.d_h,
            d_mlp: self.d_mlp,
            m: self.m,
            d_c: self.d_c,
            d_cls: self.d_cls,
            n_classes: self.n_classes,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }
}

#[pymethods]
impl ModelConfig {
    #[new]
    #[pyo3(signature = (
        vocab_size,
        n_classes,
        *,
        d_e = model::ModelConfig::DEFAULT_D_E,
        d_h = model::ModelConfig::DEFAULT_D_H,
        d_mlp = model::ModelConfig::DEFAULT_D_MLP,
        m = model::ModelConfig::DEFAULT_M,
        d_c = model::ModelConfig::DEFAULT_D_C,
        d_cls = model::ModelConfig::DEFAULT_D_CLS,
        lambda1 = model::ModelConfig::DEFAULT_LAMBDA,
        lambda2 = model::ModelConfig::DEFAULT_LAMBDA,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        vocab_size: usize,
        n_classes: usize,
        d_e: usize,
        d_h: usize,
        d_mlp: usize,
        m: usize,
        d_c: usize,
        d_cls: usize,
        lambda1: f64,
        lambda2: f64,
    ) -> PyResult<Self> {
        let c = ModelConfig {
            vocab_size,
            n_classes,
            d_e,
            d_h,
            d_mlp,
            m,
            d_c,
            d_cls,
            lambda1,
            lambda2,
        };
        c.core().validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(c)
    }

    /// Small dimensions suited to quick experiments.
    #[staticmethod]
    fn small(vocab_size: usize, n_classes: usize) -> Self {
        (&model::ModelConfig::small(vocab_size, n_classes)).into()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.core())
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(vocab_size={}, n_classes={}, d_e={}, d_h={}, d_mlp={}, m={}, d_c={}, d_cls={}, lambda1={}, lambda2={})",
            self.vocab_size,
            self.n_classes,
            self.d_e,
            self.d_h,
            self.d_mlp,
            self.m,
            self.d_c,
            self.d_cls,
            self.lambda1,
            self.lambda2
        )
    }
}

/// A classifier: configuration, parameters and the vocabulary it was
/// trained with.
#[pyclass(module = "lscr_py")]
struct Model {
    inner: Checkpoint,
}

impl Model {
    fn examples(&self, texts: Vec<Text>, labels: Option<Vec<usize>>) -> PyResult<Vec<Example>> {
        if let Some(l) = &labels {
            if l.len() != texts.len() {
                return Err(PyValueError::new_err(format!(
                    "{} texts but {} labels",
                    texts.len(),
                    l.len()
                )));
            }
            if let Some(&bad) = l.iter().find(|&&y| y >= self.inner.config.n_classes) {
                return Err(PyValueError::new_err(format!(
                    "label {bad} outside {} classes",
                    self.inner.config.n_classes
                )));
            }
        }
        let labels = labels.unwrap_or_else(|| vec![0; texts.len()]);
        Ok(texts
            .into_iter()
            .zip(labels)
            .map(|(t, y)| Example::new(self.inner.vocab.encode(&t.into_tokens()), y))
            .collect())
    }
}

fn eval_opts(batch_size: usize, max_len: Option<usize>) -> PyResult<EvalOptions> {
    if batch_size == 0 {
        return Err(PyValueError::new_err("batch_size must be at least 1"));
    }
    Ok(EvalOptions { batch_size, max_len })
}

#[pymethods]
impl Model {
    /// Freshly initialized model. `config.vocab_size` must match `vocab`.
    #[new]
    #[pyo3(signature = (config, vocab, seed=1))]
    fn new(config: &ModelConfig, vocab: &Vocabulary, seed: u64) -> PyResult<Self> {
        let cfg = config.core();
        if cfg.vocab_size != vocab.inner.len() {
            return Err(PyValueError::new_err(format!(
                "config.vocab_size is {} but the vocabulary has {} entries",
                cfg.vocab_size,
                vocab.inner.len()
            )));
        }
        let params = Parameters::init(&cfg, &mut stream_rng(seed, Stream::Init))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Model {
            inner: Checkpoint {
                config: cfg,
                params,
                vocab: vocab.inner.clone(),
            },
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = Checkpoint::load(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Ok(Model { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn config(&self) -> ModelConfig {
        (&self.inner.config).into()
    }

    #[getter]
    fn vocab(&self) -> Vocabulary {
        Vocabulary {
            inner: self.inner.vocab.clone(),
        }
    }

    /// Names and shapes of every parameter tensor.
    fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let set = self.inner.params.set();
        set.names()
            .iter()
            .map(|n| (n.clone(), set.get(n).map_or_else(Vec::new, |t| t.shape().to_vec())))
            .collect()
    }

    /// Train in place and return the per-epoch report. The parameters of the
    /// epoch with the best validation accuracy are kept; without validation
    /// data, the last epoch's.
    #[pyo3(signature = (
        texts, labels, validation_texts=None, validation_labels=None, *,
        epochs=TrainOptions::DEFAULT_EPOCHS, batch_size=TrainOptions::DEFAULT_BATCH_SIZE,
        lr=training::AdamConfig::default().lr, clip_norm=Some(5.0), seed=1, max_len=None,
        freeze_embeddings=false, log_path=None, checkpoint_path=None, verbose=false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        texts: Vec<Text>,
        labels: Vec<usize>,
        validation_texts: Option<Vec<Text>>,
        validation_labels: Option<Vec<usize>>,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        clip_norm: Option<f64>,
        seed: u64,
        max_len: Option<usize>,
        freeze_embeddings: bool,
        log_path: Option<PathBuf>,
        checkpoint_path: Option<PathBuf>,
        verbose: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let train = self.examples(texts, Some(labels))?;
        let validation = match (validation_texts, validation_labels) {
            (Some(t), Some(l)) => self.examples(t, Some(l))?,
            (None, None) => Vec::new(),
            _ => {
                return Err(PyValueError::new_err(
                    "validation_texts and validation_labels must be given together",
                ))
            }
        };
        let opts = TrainOptions {
            epochs,
            batch_size,
            max_len,
            seed,
            adam: training::AdamConfig {
                lr,
                clip_norm,
                ..training::AdamConfig::default()
            },
            freeze_embeddings,
            eval_batch_size: batch_size,
            log_path,
            checkpoint_path,
            verbose,
        };
        let ckpt = &self.inner;
        let outcome = py
            .detach(|| {
                let data = TrainData {
                    train: &train,
                    validation: &validation,
                };
                training::train(&ckpt.config, ckpt.params.clone(), &ckpt.vocab, data, &opts)
            })
            .map_err(err)?;
        self.inner.params = outcome.best;
        to_py(py, &outcome.report)
    }

    /// Class probabilities per text.
    #[pyo3(signature = (texts, batch_size=64, max_len=None))]
    fn predict_proba(&self, texts: Vec<Text>, batch_size: usize, max_len: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, None)?;
        let batch_opts = BatchOptions {
            batch_size: opts.batch_size,
            max_len: opts.max_len,
            shuffle_seed: None,
        };
        let mut out = Vec::with_capacity(examples.len());
        for batch in make_batches(&examples, batch_opts, 0) {
            let y = infer(&self.inner.params, &batch, &self.inner.config).map_err(err)?;
            for b in 0..batch.size() {
                out.push(y.probs.row(b).iter().map(|&p| p as f64).collect());
            }
        }
        Ok(out)
    }

    /// Most probable class per text.
    #[pyo3(signature = (texts, batch_size=64, max_len=None))]
    fn predict(&self, texts: Vec<Text>, batch_size: usize, max_len: Option<usize>) -> PyResult<Vec<usize>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, None)?;
        training::predict(&self.inner.params, &self.inner.config, &examples, opts).map_err(err)
    }

    /// Accuracy, per-class accuracy, support and confusion matrix
    /// (`confusion[gold][predicted]`).
    #[pyo3(signature = (texts, labels, batch_size=64, max_len=None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        texts: Vec<Text>,
        labels: Vec<usize>,
        batch_size: usize,
        max_len: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, Some(labels))?;
        let ev = training::evaluate(&self.inner.params, &self.inner.config, &examples, opts).map_err(err)?;
        to_py(py, &ev)
    }

    /// Mean loss terms (`ce`, `word`, `class`, `total`) over `texts`.
    #[pyo3(signature = (texts, labels, batch_size=64, max_len=None))]
    fn losses<'py>(
        &self,
        py: Python<'py>,
        texts: Vec<Text>,
        labels: Vec<usize>,
        batch_size: usize,
        max_len: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, Some(labels))?;
        let l = training::evaluate_losses(&self.inner.params, &self.inner.config, &examples, opts).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("ce", l.ce)?;
        d.set_item("word", l.word)?;
        d.set_item("class", l.class)?;
        d.set_item("total", l.total)?;
        Ok(d)
    }

    /// Word-to-cluster matrix of one text: `tokens`, `assignment` (clusters
    /// by tokens), `predicted`, `gold` and a `"predicted / gold"` title.
    #[pyo3(signature = (text, gold=None))]
    fn heatmap<'py>(&self, py: Python<'py>, text: &str, gold: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let c = &self.inner;
        let record = analysis::heatmap(&c.params, &c.config, &c.vocab, text, gold).map_err(|e| match e {
            analysis::AnalysisError::EmptyText => PyValueError::new_err(e.to_string()),
            e => err(e),
        })?;
        to_py(py, &record)
    }

    /// Top `top_k` words per cluster under hard assignment, as
    /// `(token, count)` pairs, plus cluster sizes and the total word count.
    #[pyo3(signature = (texts, top_k=DEFAULT_TOP_K, batch_size=64, max_len=None))]
    fn cluster_report<'py>(
        &self,
        py: Python<'py>,
        texts: Vec<Text>,
        top_k: usize,
        batch_size: usize,
        max_len: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, None)?;
        let c = &self.inner;
        let report = analysis::cluster_report(&c.params, &c.config, &c.vocab, &examples, opts).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("total_words", report.total_words)?;
        d.set_item("sizes", report.sizes.clone())?;
        d.set_item("top_words", report.top_words(top_k))?;
        Ok(d)
    }

    /// Text-level cluster distribution (length `m`) for every text.
    #[pyo3(signature = (texts, batch_size=64, max_len=None))]
    fn text_distributions(
        &self,
        texts: Vec<Text>,
        batch_size: usize,
        max_len: Option<usize>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, None)?;
        let c = &self.inner;
        let records = analysis::text_distributions(&c.params, &c.config, &examples, opts).map_err(err)?;
        Ok(records.into_iter().map(|r| r.v_s).collect())
    }

    /// Mean per-word assignment entropy over `texts`.
    #[pyo3(signature = (texts, batch_size=64, max_len=None))]
    fn word_entropy(&self, texts: Vec<Text>, batch_size: usize, max_len: Option<usize>) -> PyResult<f64> {
        let opts = eval_opts(batch_size, max_len)?;
        let examples = self.examples(texts, None)?;
        analysis::mean_word_entropy(&self.inner.params, &self.inner.config, &examples, opts).map_err(err)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Model(vocab_size={}, m={}, n_classes={})",
            c.vocab_size, c.m, c.n_classes
        )
    }
}

/// Read a class-first CSV file (1-based labels on disk). Returns
/// `(token_lists, labels)` with 0-based labels.
#[pyfunction]
#[pyo3(signature = (path, has_header=false, n_classes=None))]
fn load_corpus(path: PathBuf, has_header: bool, n_classes: Option<usize>) -> PyResult<(Vec<Vec<String>>, Vec<usize>)> {
    let format = data::CorpusFormat { n_classes, has_header };
    let corpus = data::load_corpus(&path, &format).map_err(err)?;
    Ok(corpus.records.into_iter().map(|r| (r.tokens, r.label)).unzip())
}

/// Generated corpus with disjoint topic vocabularies and shared filler
/// words. Returns `(token_lists, labels, topic_of)` where `topic_of` maps
/// each topic word to its topic.
#[pyfunction]
#[pyo3(signature = (samples=2000, seed=1))]
fn synthetic_corpus(
    samples: usize,
    seed: u64,
) -> (Vec<Vec<String>>, Vec<usize>, std::collections::HashMap<String, usize>) {
    let s = SyntheticCorpus::generate(&SyntheticSpec::clustering(samples, seed));
    let topic_of = s
        .topic_words
        .iter()
        .enumerate()
        .flat_map(|(t, ws)| ws.iter().map(move |w| (w.clone(), t)))
        .collect();
    let (texts, labels) = s.corpus.records.into_iter().map(|r| (r.tokens, r.label)).unzip();
    (texts, labels, topic_of)
}

#[pymodule]
pub fn lscr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Vocabulary>()?;
    m.add_class::<ModelConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add("LscrError", m.py().get_type::<LscrError>())?;
    Ok(())
}
