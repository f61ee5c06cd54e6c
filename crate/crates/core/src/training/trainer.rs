use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{adam_step, evaluate, save_checkpoint, AdamConfig, EvalOptions, OptimizerState, TrainError};
use crate::autodiff::{Tape, Tensor, TensorError};
use crate::data::{make_batches, Batch, BatchOptions, Example, Vocabulary};
use crate::losses::{objective, LossBreakdown, LossError};
use crate::model::{forward, ModelConfig, ModelError, Param, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: Option<usize>,
    /// Master seed; the shuffle order of epoch `e` is derived from it.
    pub seed: u64,
    pub adam: AdamConfig,
    pub freeze_embeddings: bool,
    pub eval_batch_size: usize,
    /// JSON-lines step log.
    pub log_path: Option<PathBuf>,
    /// Best-so-far checkpoint, rewritten whenever validation improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Print one summary line per epoch to stdout.
    pub verbose: bool,
}

impl TrainOptions {
    pub const DEFAULT_EPOCHS: usize = 4;
    pub const DEFAULT_BATCH_SIZE: usize = 64;
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: Self::DEFAULT_EPOCHS,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            max_len: None,
            seed: 0,
            adam: AdamConfig::default(),
            freeze_embeddings: false,
            eval_batch_size: Self::DEFAULT_BATCH_SIZE,
            log_path: None,
            checkpoint_path: None,
            verbose: false,
        }
    }
}

/// One line of the step log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    #[serde(rename = "L_ce")]
    pub ce: f64,
    #[serde(rename = "L_word")]
    pub word: f64,
    #[serde(rename = "L_class")]
    pub class: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    /// 1-based.
    pub epoch: usize,
    pub steps: usize,
    /// Means over the epoch's batches.
    #[serde(rename = "L_ce")]
    pub ce: f64,
    #[serde(rename = "L_word")]
    pub word: f64,
    #[serde(rename = "L_class")]
    pub class: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
    /// Accuracy of the pre-update predictions made while training.
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochSummary>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_validation_accuracy: Option<f64>,
    pub steps: u64,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters of the best epoch.
    pub best: Parameters<f32>,
    /// Parameters after the last step.
    pub last: Parameters<f32>,
}

pub struct TrainData<'d> {
    pub train: &'d [Example],
    /// May be empty, in which case the final epoch is kept.
    pub validation: &'d [Example],
}

/// Result of one optimization step on one batch.
pub struct StepResult {
    pub losses: LossBreakdown,
    pub predictions: Vec<usize>,
}

/// Forward, backward and one Adam update on `batch`.
pub fn train_step(
    params: &mut Parameters<f32>,
    state: &mut OptimizerState,
    batch: &Batch,
    config: &ModelConfig,
    freeze_embeddings: bool,
) -> Result<StepResult, TrainError> {
    let (losses, predictions, mut grads) = {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let graph = forward(&mut tape, &vars, batch, config)?;
        let obj = objective(&mut tape, &graph, batch, config)?;
        let grads = tape.backward(obj.total)?;
        let g: Vec<Tensor<f32>> = vars.all().iter().map(|&v| grads.wrt(v)).collect();
        (obj.breakdown(&tape), graph.output(&tape).predictions(), g)
    };
    if freeze_embeddings {
        grads[Param::Embedding.index()].data_mut().fill(0.0);
    }
    adam_step(params.set_mut(), &grads, state)?;
    params.zero_pad_row();
    Ok(StepResult { losses, predictions })
}

/// Runs the epoch loop, keeping the parameters with the best validation
/// accuracy (earliest epoch on ties).
///
/// A non-finite loss stops training with [`TrainError::Diverged`]; any
/// checkpoint written before that point is left as is.
pub fn train(
    config: &ModelConfig,
    init: Parameters<f32>,
    vocab: &Vocabulary,
    data: TrainData<'_>,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if opts.batch_size == 0 || opts.eval_batch_size == 0 {
        return Err(TrainError::InvalidOption {
            field: "batch_size",
            reason: "must be at least 1".into(),
        });
    }
    for e in data.train.iter().chain(data.validation) {
        if e.label >= config.n_classes {
            return Err(TrainError::LabelOutOfRange {
                label: e.label,
                n_classes: config.n_classes,
            });
        }
    }

    let mut log = match &opts.log_path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
            }
            Some((
                BufWriter::new(File::create(path).map_err(|e| TrainError::io(path, e))?),
                path,
            ))
        }
        None => None,
    };

    let mut params = init;
    let mut state = OptimizerState::new(params.set(), opts.adam.clone());
    let batch_opts = BatchOptions {
        batch_size: opts.batch_size,
        max_len: opts.max_len,
        shuffle_seed: Some(opts.seed),
    };
    let eval_opts = EvalOptions {
        batch_size: opts.eval_batch_size,
        max_len: opts.max_len,
    };

    let mut epochs = Vec::with_capacity(opts.epochs);
    let mut best: Option<(usize, Option<f64>, Parameters<f32>)> = None;
    let mut step: u64 = 0;

    for epoch in 1..=opts.epochs {
        let started = Instant::now();
        let mut sums = [0.0f64; 4];
        let (mut correct, mut seen, mut steps) = (0usize, 0usize, 0usize);

        for batch in make_batches(data.train, batch_opts, epoch as u32) {
            let result = match train_step(&mut params, &mut state, &batch, config, opts.freeze_embeddings) {
                Ok(r) => r,
                Err(e) if is_divergence(&e) => {
                    return Err(diverged(epoch, step + 1, opts, &mut log, e));
                }
                Err(e) => return Err(e),
            };
            step += 1;
            steps += 1;
            let l = &result.losses;
            if ![l.ce, l.word, l.class, l.total].iter().all(|v| v.is_finite()) {
                return Err(diverged(epoch, step, opts, &mut log, TrainError::NonFiniteLoss));
            }
            for (s, v) in sums.iter_mut().zip([l.ce, l.word, l.class, l.total]) {
                *s += v;
            }
            correct += result
                .predictions
                .iter()
                .zip(&batch.labels)
                .filter(|(p, g)| p == g)
                .count();
            seen += batch.size();
            if let Some((w, path)) = &mut log {
                let record = StepRecord {
                    step,
                    epoch,
                    ce: l.ce,
                    word: l.word,
                    class: l.class,
                    total: l.total,
                };
                serde_json::to_writer(&mut *w, &record).expect("step record serializes");
                writeln!(w).map_err(|e| TrainError::io(path, e))?;
            }
        }
        if let Some((w, path)) = &mut log {
            w.flush().map_err(|e| TrainError::io(path, e))?;
        }

        let validation_accuracy = if data.validation.is_empty() {
            None
        } else {
            Some(evaluate(&params, config, data.validation, eval_opts)?.accuracy)
        };
        let n = steps as f64;
        let summary = EpochSummary {
            epoch,
            steps,
            ce: sums[0] / n,
            word: sums[1] / n,
            class: sums[2] / n,
            total: sums[3] / n,
            train_accuracy: correct as f64 / seen as f64,
            validation_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            println!("{}", format_summary(&summary, opts.epochs));
        }
        epochs.push(summary);

        let improved = match (&best, validation_accuracy) {
            (None, _) => true,
            (Some((_, Some(prev), _)), Some(acc)) => acc > *prev,
            (Some(_), None) => true,
            (Some((_, None, _)), Some(_)) => true,
        };
        if improved {
            if let Some(path) = &opts.checkpoint_path {
                save_checkpoint(&params, config, vocab, path)?;
            }
            best = Some((epoch, validation_accuracy, params.clone()));
        }
    }

    let (best_epoch, best_validation_accuracy, best_params) = match best {
        Some(b) => b,
        None => (0, None, params.clone()),
    };
    Ok(TrainOutcome {
        report: TrainReport {
            epochs,
            best_epoch,
            best_validation_accuracy,
            steps: step,
        },
        best: best_params,
        last: params,
    })
}

fn is_divergence(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::NonFiniteGradient { .. }
            | TrainError::NonFiniteLoss
            | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
            | TrainError::Loss(LossError::Tensor(TensorError::NonFinite { .. }))
            | TrainError::Tensor(TensorError::NonFinite { .. })
    )
}

fn diverged(
    epoch: usize,
    step: u64,
    opts: &TrainOptions,
    log: &mut Option<(BufWriter<File>, &PathBuf)>,
    cause: TrainError,
) -> TrainError {
    if let Some((w, _)) = log {
        let _ = w.flush();
    }
    TrainError::Diverged {
        epoch,
        step,
        checkpoint: opts.checkpoint_path.clone().filter(|p| p.exists()),
        cause: Box::new(cause),
    }
}

pub fn format_summary(s: &EpochSummary, total_epochs: usize) -> String {
    let val = match s.validation_accuracy {
        Some(a) => format!("{a:.4}"),
        None => "-".to_string(),
    };
    format!(
        "epoch {}/{}  L_total {:.4}  L_ce {:.4}  L_word {:.4}  L_class {:.4}  train_acc {:.4}  val_acc {}  ({:.1}s)",
        s.epoch, total_epochs, s.total, s.ce, s.word, s.class, s.train_accuracy, val, s.seconds
    )
}
