//! Command implementations behind the `lscr` binary.
//!
//! Each command returns `Result<_, CliError>`; [`CliError::exit_code`] maps
//! failures onto the process exit status (2 for usage and configuration
//! problems, 1 for everything that goes wrong while running).

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lscr::analysis::{
    cluster_report, export_text_distributions, heatmap, text_distributions, AnalysisError, ClusterReport, HeatmapRecord,
};
use lscr::data::{
    load_corpus, load_embeddings, split_validation, Corpus, CorpusFormat, Example, TextRecord, Vocabulary,
};
use lscr::model::Parameters;
use lscr::rng::{stream_rng, Stream};
use lscr::training::{
    evaluate, load_checkpoint, train, Checkpoint, EvalOptions, Evaluation, TrainData, TrainOptions, TrainReport,
};
use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "model.lscr";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, &text)
}

/// Missing inputs are the caller's mistake, everything else is a runtime error.
fn require_file(what: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

/// Written to `report.json` at the end of a training run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub training: TrainReport,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    /// Share of the vocabulary found in the embedding file.
    pub embedding_coverage: Option<f64>,
    pub test: Option<Evaluation>,
    pub warnings: Vec<String>,
}

pub struct TrainRun {
    pub output_dir: PathBuf,
    pub report: RunReport,
}

/// Loads, trains and writes `config.toml`, `train_log.jsonl`, `model.lscr`
/// and `report.json` into the run's output directory.
pub fn cmd_train(config_path: Option<&Path>, overrides: &[String], quiet: bool) -> Result<TrainRun, CliError> {
    let mut cfg = RunConfig::load(config_path, overrides)?;
    let mut warnings = Vec::new();

    let format = CorpusFormat {
        n_classes: cfg.n_classes,
        has_header: cfg.has_header,
    };
    let load = |p: &Path| -> Result<Corpus, CliError> { load_corpus(p, &format).map_err(runtime) };
    let train_corpus = load(&cfg.train_path)?;
    note_rejected(&mut warnings, &cfg.train_path, &train_corpus);
    let (train_records, validation_records, mut n_classes) = match &cfg.validation_path {
        Some(p) => {
            let v = load(p)?;
            note_rejected(&mut warnings, p, &v);
            let n = train_corpus.n_classes.max(v.n_classes);
            (train_corpus.records, v.records, n)
        }
        None => {
            let split = split_validation(&train_corpus.records, cfg.validation_fraction, cfg.seed).map_err(runtime)?;
            warnings.extend(split.warnings);
            (split.train, split.validation, train_corpus.n_classes)
        }
    };
    let test_corpus = match &cfg.test_path {
        Some(p) => {
            let t = load(p)?;
            note_rejected(&mut warnings, p, &t);
            n_classes = n_classes.max(t.n_classes);
            Some(t)
        }
        None => None,
    };
    let n_classes = cfg.n_classes.unwrap_or(n_classes);
    if n_classes < 2 {
        return Err(CliError::Usage(format!(
            "n_classes: the data has only {n_classes} class; set n_classes explicitly"
        )));
    }
    cfg.n_classes = Some(n_classes);

    let vocab = Vocabulary::build(&train_records, cfg.min_freq, cfg.max_vocab);
    let mut model_cfg = cfg.model_config(vocab.len(), n_classes);
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let (params, coverage) = match &cfg.embeddings_path {
        Some(path) => {
            let mut oov_rng = stream_rng(cfg.seed, Stream::Oov);
            let loaded = load_embeddings(path, &vocab, None, &mut oov_rng).map_err(runtime)?;
            if loaded.table.dim() != cfg.d_e {
                return Err(ConfigError::Invalid {
                    field: "d_e",
                    reason: format!(
                        "is {} but {} holds {}-dimensional vectors",
                        cfg.d_e,
                        path.display(),
                        loaded.table.dim()
                    ),
                }
                .into());
            }
            model_cfg.d_e = loaded.table.dim();
            let p = Parameters::init_with_embeddings(&model_cfg, loaded.table, &mut init_rng).map_err(runtime)?;
            (p, Some(loaded.coverage))
        }
        None => (Parameters::init(&model_cfg, &mut init_rng).map_err(runtime)?, None),
    };

    let out_dir = cfg.resolved_output_dir();
    fs::create_dir_all(&out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    cfg.absolutize();
    cfg.output_dir = Some(fs::canonicalize(&out_dir).unwrap_or_else(|_| out_dir.clone()));
    write_file(&out_dir.join(CONFIG_FILE), &cfg.to_toml())?;

    let encode = |rs: &[TextRecord]| -> Vec<Example> {
        rs.iter()
            .map(|r| Example::new(vocab.encode(&r.tokens), r.label))
            .collect()
    };
    let train_ex = encode(&train_records);
    let validation_ex = encode(&validation_records);
    if !quiet {
        println!(
            "{} train / {} validation examples, vocabulary {}, {} classes",
            train_ex.len(),
            validation_ex.len(),
            vocab.len(),
            n_classes
        );
        if let Some(c) = coverage {
            println!("embedding coverage {c:.4}");
        }
    }

    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        max_len: cfg.max_len,
        seed: cfg.seed,
        adam: cfg.adam(),
        freeze_embeddings: cfg.freeze_embeddings,
        eval_batch_size: cfg.batch_size,
        log_path: Some(out_dir.join(LOG_FILE)),
        checkpoint_path: Some(out_dir.join(CHECKPOINT_FILE)),
        verbose: !quiet,
    };
    let data = TrainData {
        train: &train_ex,
        validation: &validation_ex,
    };
    let outcome = train(&model_cfg, params, &vocab, data, &opts).map_err(runtime)?;

    let eval_opts = EvalOptions {
        batch_size: cfg.batch_size,
        max_len: cfg.max_len,
    };
    let test = match &test_corpus {
        Some(t) => {
            let ev = evaluate(&outcome.best, &model_cfg, &t.to_examples(&vocab), eval_opts).map_err(runtime)?;
            if !quiet {
                println!("test accuracy {:.4}", ev.accuracy);
            }
            Some(ev)
        }
        None => None,
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = RunReport {
        training: outcome.report,
        vocab_size: vocab.len(),
        n_classes,
        train_examples: train_ex.len(),
        validation_examples: validation_ex.len(),
        embedding_coverage: coverage,
        test,
        warnings,
    };
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    if !quiet {
        println!("wrote {}", out_dir.display());
    }
    Ok(TrainRun {
        output_dir: out_dir,
        report,
    })
}

fn note_rejected(warnings: &mut Vec<String>, path: &Path, corpus: &Corpus) {
    if !corpus.rejected_lines.is_empty() {
        warnings.push(format!(
            "{}: skipped {} rows with no tokens",
            path.display(),
            corpus.rejected_lines.len()
        ));
    }
}

fn open_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    require_file("checkpoint", path)?;
    load_checkpoint(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path, has_header: bool, n_classes: usize) -> Result<Corpus, CliError> {
    require_file("dataset", path)?;
    let format = CorpusFormat {
        n_classes: Some(n_classes),
        has_header,
    };
    load_corpus(path, &format).map_err(runtime)
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub has_header: bool,
    pub batch_size: usize,
    pub max_len: Option<usize>,
    /// Defaults to `eval_<dataset stem>.json` next to the checkpoint.
    pub report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    #[serde(flatten)]
    pub evaluation: Evaluation,
}

pub fn default_eval_report_path(checkpoint: &Path, data: &Path) -> PathBuf {
    let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    checkpoint
        .parent()
        .unwrap_or(Path::new(""))
        .join(format!("eval_{stem}.json"))
}

/// Prints accuracy and the confusion matrix and writes a JSON report.
pub fn cmd_eval(args: &EvalArgs, out: &mut impl Write) -> Result<(Evaluation, PathBuf), CliError> {
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    let ckpt = open_checkpoint(&args.checkpoint)?;
    let corpus = load_dataset(&args.data, args.has_header, ckpt.config.n_classes)?;
    let opts = EvalOptions {
        batch_size: args.batch_size,
        max_len: args.max_len,
    };
    let ev = evaluate(&ckpt.params, &ckpt.config, &corpus.to_examples(&ckpt.vocab), opts).map_err(runtime)?;
    print_evaluation(&ev, out).map_err(runtime)?;

    let path = args
        .report
        .clone()
        .unwrap_or_else(|| default_eval_report_path(&args.checkpoint, &args.data));
    let report = EvalReport {
        checkpoint: args.checkpoint.clone(),
        dataset: args.data.clone(),
        evaluation: ev,
    };
    write_json(&path, &report)?;
    Ok((report.evaluation, path))
}

/// `accuracy 0.XXXX`, then the confusion matrix with gold classes as rows.
pub fn print_evaluation(ev: &Evaluation, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "accuracy {:.4} ({} examples)", ev.accuracy, ev.total)?;
    let n = ev.confusion.len();
    let width = ev
        .confusion
        .iter()
        .flatten()
        .map(|c| c.to_string().len())
        .max()
        .unwrap_or(1)
        .max(n.to_string().len())
        .max(4);
    write!(out, "{:>9}", "gold\\pred")?;
    for p in 0..n {
        write!(out, " {p:>width$}")?;
    }
    writeln!(out, " {:>8}", "acc")?;
    for (g, row) in ev.confusion.iter().enumerate() {
        write!(out, "{g:>9}")?;
        for c in row {
            write!(out, " {c:>width$}")?;
        }
        match ev.per_class_accuracy[g] {
            Some(a) => writeln!(out, " {a:>8.4}")?,
            None => writeln!(out, " {:>8}", "-")?,
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AnalyzeArgs {
    pub checkpoint: PathBuf,
    pub data: Option<PathBuf>,
    pub has_header: bool,
    pub top_k: usize,
    pub heatmap: Option<String>,
    /// 0-based gold class of the heat-map text.
    pub gold: Option<usize>,
    pub export_distributions: Option<PathBuf>,
    /// Where `clusters.json` and the heat-map files go; defaults to the
    /// checkpoint's directory.
    pub output_dir: Option<PathBuf>,
    pub batch_size: usize,
    pub max_len: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ClusterExport<'a> {
    total_words: usize,
    sizes: &'a [usize],
    top_words: Vec<Vec<(String, usize)>>,
}

#[derive(Debug, Default)]
pub struct AnalyzeOutputs {
    pub clusters: Option<ClusterReport>,
    pub heatmap: Option<HeatmapRecord>,
    pub written: Vec<PathBuf>,
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<AnalyzeOutputs, CliError> {
    if args.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    if args.data.is_none() && args.heatmap.is_none() {
        return Err(CliError::Usage("nothing to do: give --data and/or --heatmap".into()));
    }
    if args.export_distributions.is_some() && args.data.is_none() {
        return Err(CliError::Usage("--export-distributions needs --data".into()));
    }
    let ckpt = open_checkpoint(&args.checkpoint)?;
    let (cfg, params, vocab) = (&ckpt.config, &ckpt.params, &ckpt.vocab);
    if let Some(g) = args.gold.filter(|&g| g >= cfg.n_classes) {
        return Err(CliError::Usage(format!(
            "--gold {g} outside the model's {} classes",
            cfg.n_classes
        )));
    }
    let out_dir = match &args.output_dir {
        Some(d) => d.clone(),
        None => args.checkpoint.parent().unwrap_or(Path::new("")).to_path_buf(),
    };
    if !out_dir.as_os_str().is_empty() {
        fs::create_dir_all(&out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    }
    let opts = EvalOptions {
        batch_size: args.batch_size,
        max_len: args.max_len,
    };
    let mut result = AnalyzeOutputs::default();

    if let Some(data) = &args.data {
        let examples = load_dataset(data, args.has_header, cfg.n_classes)?.to_examples(vocab);
        let report = cluster_report(params, cfg, vocab, &examples, opts).map_err(runtime)?;
        let top = report.top_words(args.top_k);
        for (i, words) in top.iter().enumerate() {
            let list: Vec<String> = words.iter().map(|(w, c)| format!("{w}:{c}")).collect();
            writeln!(out, "cluster {i} ({} words): {}", report.sizes[i], list.join(" ")).map_err(runtime)?;
        }
        let path = out_dir.join("clusters.json");
        write_json(
            &path,
            &ClusterExport {
                total_words: report.total_words,
                sizes: &report.sizes,
                top_words: top,
            },
        )?;
        result.written.push(path);

        if let Some(path) = &args.export_distributions {
            let records = text_distributions(params, cfg, &examples, opts).map_err(runtime)?;
            export_text_distributions(&records, path).map_err(runtime)?;
            writeln!(out, "wrote {} distributions to {}", records.len(), path.display()).map_err(runtime)?;
            result.written.push(path.clone());
        }
        result.clusters = Some(report);
    }

    if let Some(text) = &args.heatmap {
        let record = heatmap(params, cfg, vocab, text, args.gold).map_err(|e| match e {
            AnalysisError::EmptyText => CliError::Usage(format!("--heatmap: {e}")),
            e => runtime(e),
        })?;
        let json = out_dir.join("heatmap.json");
        let csv = out_dir.join("heatmap.csv");
        record.write_json(&json).map_err(runtime)?;
        record.write_csv(&csv).map_err(runtime)?;
        writeln!(out, "heatmap {}: {}", record.title, record.tokens.join(" ")).map_err(runtime)?;
        result.written.extend([json, csv]);
        result.heatmap = Some(record);
    }
    Ok(result)
}
