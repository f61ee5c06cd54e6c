use serde::{Deserialize, Serialize};

use super::{Checkpoint, TrainError};
use crate::autodiff::Tape;
use crate::data::{make_batches, BatchOptions, Corpus, Example};
use crate::losses::{objective, LossBreakdown};
use crate::model::{forward, infer, ModelConfig, Parameters};

/// Batching used for inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub max_len: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            batch_size: 64,
            max_len: None,
        }
    }
}

/// Accuracy summary over one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes with no examples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    pub total: usize,
}

impl Evaluation {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], n_classes: usize) -> Self {
        assert_eq!(predictions.len(), labels.len());
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&p, &g) in predictions.iter().zip(labels) {
            confusion[g][p] += 1;
        }
        let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let total = labels.len();
        Evaluation {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            per_class_accuracy: (0..n_classes)
                .map(|c| (support[c] > 0).then(|| confusion[c][c] as f64 / support[c] as f64))
                .collect(),
            confusion,
            support,
            total,
        }
    }
}

/// Predicted class per example, in input order. Ties go to the lowest class.
pub fn predict(
    params: &Parameters<f32>,
    config: &ModelConfig,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<Vec<usize>, TrainError> {
    let batch_opts = BatchOptions {
        batch_size: opts.batch_size,
        max_len: opts.max_len,
        shuffle_seed: None,
    };
    let mut out = Vec::with_capacity(examples.len());
    for batch in make_batches(examples, batch_opts, 0) {
        out.extend(infer(params, &batch, config)?.predictions());
    }
    Ok(out)
}

pub fn evaluate(
    params: &Parameters<f32>,
    config: &ModelConfig,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<Evaluation, TrainError> {
    if let Some(e) = examples.iter().find(|e| e.label >= config.n_classes) {
        return Err(TrainError::LabelOutOfRange {
            label: e.label,
            n_classes: config.n_classes,
        });
    }
    let preds = predict(params, config, examples, opts)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    Ok(Evaluation::from_predictions(&preds, &labels, config.n_classes))
}

/// Loss terms averaged over the batches of `examples`, without updating
/// anything. Class distributions are left empty.
pub fn evaluate_losses(
    params: &Parameters<f32>,
    config: &ModelConfig,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<LossBreakdown, TrainError> {
    let batch_opts = BatchOptions {
        batch_size: opts.batch_size,
        max_len: opts.max_len,
        shuffle_seed: None,
    };
    let mut sums = [0.0f64; 4];
    let mut n = 0usize;
    for batch in make_batches(examples, batch_opts, 0) {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let graph = forward(&mut tape, &vars, &batch, config)?;
        let l = objective(&mut tape, &graph, &batch, config)?.breakdown(&tape);
        for (s, v) in sums.iter_mut().zip([l.ce, l.word, l.class, l.total]) {
            *s += v;
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    Ok(LossBreakdown {
        ce: sums[0] / n,
        word: sums[1] / n,
        class: sums[2] / n,
        total: sums[3] / n,
        class_distributions: Vec::new(),
    })
}

/// Evaluates a checkpoint on raw text records, encoding them with the
/// checkpoint's own vocabulary.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    corpus: &Corpus,
    opts: EvalOptions,
) -> Result<Evaluation, TrainError> {
    if corpus.n_classes > checkpoint.config.n_classes {
        return Err(TrainError::ClassCountMismatch {
            model: checkpoint.config.n_classes,
            data: corpus.n_classes,
        });
    }
    let examples = corpus.to_examples(&checkpoint.vocab);
    evaluate(&checkpoint.params, &checkpoint.config, &examples, opts)
}
