//! Cluster statistics and exports for inspecting a trained model: hard
//! word→cluster assignments, top words per cluster, text-level cluster
//! distributions and per-text heat maps.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape};
use crate::data::{make_batches, tokenize, Batch, BatchOptions, Example, Vocabulary};
use crate::losses::{class_distributions, LossError};
use crate::model::{argmax, forward, infer, ModelConfig, ModelError, Parameters};
use crate::training::EvalOptions;

pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("text has no tokens")]
    EmptyText,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Most probable cluster for one word's distribution; ties go to the lowest
/// cluster index.
pub fn hard_assign<S: Scalar>(column: &[S]) -> usize {
    argmax(column)
}

/// Hard assignment of every real word in an `m×T` matrix (rows are
/// clusters). Positions with `mask[t] == false` are skipped.
pub fn hard_assign_masked<S: Scalar>(a: &[Vec<S>], mask: &[bool]) -> Vec<Option<usize>> {
    let mut column = vec![S::zero(); a.len()];
    mask.iter()
        .enumerate()
        .map(|(t, &real)| {
            real.then(|| {
                for (c, row) in column.iter_mut().zip(a) {
                    *c = row[t];
                }
                hard_assign(&column)
            })
        })
        .collect()
}

/// Per-cluster token counts under hard assignment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Per cluster, `(token, count)` sorted by count descending then token.
    pub clusters: Vec<Vec<(String, usize)>>,
    pub total_words: usize,
    /// Words assigned to each cluster.
    pub sizes: Vec<usize>,
}

/// Accumulates hard assignments one word at a time.
#[derive(Clone, Debug)]
pub struct ClusterCounter {
    counts: Vec<HashMap<String, usize>>,
}

impl ClusterCounter {
    pub fn new(m: usize) -> Self {
        ClusterCounter {
            counts: vec![HashMap::new(); m],
        }
    }

    pub fn add(&mut self, token: &str, cluster: usize) {
        *self.counts[cluster].entry(token.to_string()).or_default() += 1;
    }

    pub fn finish(self) -> ClusterReport {
        let clusters: Vec<Vec<(String, usize)>> = self
            .counts
            .into_iter()
            .map(|c| {
                let mut v: Vec<(String, usize)> = c.into_iter().collect();
                v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                v
            })
            .collect();
        let sizes: Vec<usize> = clusters.iter().map(|c| c.iter().map(|(_, n)| n).sum()).collect();
        ClusterReport {
            total_words: sizes.iter().sum(),
            sizes,
            clusters,
        }
    }
}

impl ClusterReport {
    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    /// First `k` entries of each cluster's ranking.
    pub fn top_words(&self, k: usize) -> Vec<Vec<(String, usize)>> {
        assert!(k >= 1, "k must be at least 1");
        self.clusters
            .iter()
            .map(|c| c.iter().take(k).cloned().collect())
            .collect()
    }

    /// `(Σ_clusters max-topic count) / (content words)`, where content words
    /// are those `topic_of` maps to a topic.
    pub fn purity(&self, topic_of: impl Fn(&str) -> Option<usize>) -> f64 {
        let mut content = 0usize;
        let mut majority = 0usize;
        for cluster in &self.clusters {
            let mut per_topic: HashMap<usize, usize> = HashMap::new();
            for (tok, n) in cluster {
                if let Some(t) = topic_of(tok) {
                    *per_topic.entry(t).or_default() += n;
                    content += n;
                }
            }
            majority += per_topic.values().max().copied().unwrap_or(0);
        }
        if content == 0 {
            0.0
        } else {
            majority as f64 / content as f64
        }
    }

    /// For each cluster, the topic with the most entries among its top `k`
    /// tokens and how many entries that is (lowest topic on ties).
    pub fn top_topic(&self, k: usize, topic_of: impl Fn(&str) -> Option<usize>) -> Vec<Option<(usize, usize)>> {
        self.top_words(k)
            .iter()
            .map(|words| {
                let mut per_topic: Vec<(usize, usize)> = Vec::new();
                for (tok, _) in words {
                    if let Some(t) = topic_of(tok) {
                        match per_topic.iter_mut().find(|(x, _)| *x == t) {
                            Some(e) => e.1 += 1,
                            None => per_topic.push((t, 1)),
                        }
                    }
                }
                per_topic.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                per_topic.first().copied()
            })
            .collect()
    }
}

fn batches(examples: &[Example], opts: EvalOptions) -> impl Iterator<Item = Batch> + '_ {
    make_batches(
        examples,
        BatchOptions {
            batch_size: opts.batch_size,
            max_len: opts.max_len,
            shuffle_seed: None,
        },
        0,
    )
}

/// Hard-assignment counts over every real word of `examples`.
pub fn cluster_report(
    params: &Parameters<f32>,
    config: &ModelConfig,
    vocab: &Vocabulary,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<ClusterReport, AnalysisError> {
    let mut counter = ClusterCounter::new(config.m);
    for batch in batches(examples, opts) {
        let out = infer(params, &batch, config)?;
        for b in 0..batch.size() {
            let a = out.assignment_of(b);
            let mask: Vec<bool> = (0..batch.time()).map(|t| batch.is_real(b, t)).collect();
            for (t, cluster) in hard_assign_masked(&a, &mask).into_iter().enumerate() {
                if let Some(c) = cluster {
                    counter.add(vocab.token(batch.index(b, t)).unwrap_or("<?>"), c);
                }
            }
        }
    }
    Ok(counter.finish())
}

/// One text's cluster distribution `v_s` with its gold label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextDistribution {
    pub label: usize,
    pub v_s: Vec<f64>,
}

/// `v_s` for every example, in input order, computed by the same code as
/// the class-level regularizer.
pub fn text_distributions(
    params: &Parameters<f32>,
    config: &ModelConfig,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<Vec<TextDistribution>, AnalysisError> {
    let mut out = Vec::with_capacity(examples.len());
    for batch in batches(examples, opts) {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let graph = forward(&mut tape, &vars, &batch, config)?;
        let dists = class_distributions(
            &mut tape,
            graph.assignment,
            &graph.layout.groups(),
            &batch.lengths,
            &batch.labels,
        )?;
        let text = tape.value(dists.text);
        for (b, &label) in batch.labels.iter().enumerate() {
            out.push(TextDistribution {
                label,
                v_s: text.row(b).iter().map(|&v| v as f64).collect(),
            });
        }
    }
    Ok(out)
}

/// Writes one JSON object per line: `{"label": .., "v_s": [..]}`.
pub fn export_text_distributions(records: &[TextDistribution], path: &Path) -> Result<(), AnalysisError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        writeln!(w).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Mean over real words of the assignment entropy `−Σ_k a_k ln a_k`.
pub fn mean_word_entropy(
    params: &Parameters<f32>,
    config: &ModelConfig,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<f64, AnalysisError> {
    let (mut total, mut words) = (0.0f64, 0usize);
    for batch in batches(examples, opts) {
        let out = infer(params, &batch, config)?;
        for b in 0..batch.size() {
            let a = out.assignment_of(b);
            for t in 0..batch.lengths[b] {
                total -= a
                    .iter()
                    .map(|row| row[t] as f64)
                    .filter(|&p| p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>();
                words += 1;
            }
        }
    }
    Ok(if words == 0 { 0.0 } else { total / words as f64 })
}

/// Assignment matrix of one text, ready for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRecord {
    pub tokens: Vec<String>,
    /// `m×n`: row `i` is cluster `i`, column `j` is token `j`.
    pub assignment: Vec<Vec<f64>>,
    pub predicted: usize,
    pub gold: Option<usize>,
    /// `"predicted / gold"`.
    pub title: String,
}

pub fn heatmap(
    params: &Parameters<f32>,
    config: &ModelConfig,
    vocab: &Vocabulary,
    text: &str,
    gold: Option<usize>,
) -> Result<HeatmapRecord, AnalysisError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(AnalysisError::EmptyText);
    }
    let example = Example::new(vocab.encode(&tokens), gold.unwrap_or(0));
    let batch = Batch::from_examples([&example], None);
    let out = infer(params, &batch, config)?;
    let assignment = out
        .assignment_of(0)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v as f64).collect())
        .collect();
    let predicted = out.predictions()[0];
    let title = match gold {
        Some(g) => format!("{predicted} / {g}"),
        None => format!("{predicted} / ?"),
    };
    Ok(HeatmapRecord {
        tokens,
        assignment,
        predicted,
        gold,
        title,
    })
}

impl HeatmapRecord {
    pub fn write_json(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        serde_json::to_writer_pretty(&mut w, self).expect("heatmap serializes");
        writeln!(w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    /// First row holds the tokens, then one row per cluster.
    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.tokens).map_err(|e| csv_err(path, e))?;
        for row in &self.assignment {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(io_err(path))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> AnalysisError {
    AnalysisError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_assign_argmax_and_ties() {
        assert_eq!(hard_assign(&[0.1f32, 0.7, 0.2]), 1);
        assert_eq!(hard_assign(&[0.5f64, 0.5]), 0);
    }

    #[test]
    fn masked_positions_are_excluded() {
        let a = vec![vec![0.9f32, 0.2, 0.5], vec![0.1, 0.8, 0.5]];
        assert_eq!(
            hard_assign_masked(&a, &[true, true, false]),
            vec![Some(0), Some(1), None]
        );
    }

    #[test]
    fn hard_assign_survives_monotone_rescaling() {
        let col = [0.2f64, 0.45, 0.35];
        let scaled: Vec<f64> = col.iter().map(|v| (3.0 * v + 1.0f64).ln()).collect();
        assert_eq!(hard_assign(&col), hard_assign(&scaled));
    }

    #[test]
    fn counts_split_per_occurrence() {
        let mut c = ClusterCounter::new(3);
        for _ in 0..5 {
            c.add("oil", 2);
        }
        c.add("oil", 0);
        c.add("bank", 0);
        let r = c.finish();
        assert_eq!(r.clusters[2], vec![("oil".to_string(), 5)]);
        assert_eq!(r.clusters[0], vec![("bank".to_string(), 1), ("oil".to_string(), 1)]);
        assert_eq!(r.total_words, 7);
        assert_eq!(r.sizes, vec![2, 0, 5]);
        assert_eq!(r.sizes.iter().sum::<usize>(), r.total_words);
    }

    #[test]
    fn purity_and_top_topic() {
        let mut c = ClusterCounter::new(2);
        for (tok, cl, n) in [("a1", 0, 4), ("a2", 0, 3), ("b1", 0, 1), ("b1", 1, 2), ("the", 1, 10)] {
            for _ in 0..n {
                c.add(tok, cl);
            }
        }
        let r = c.finish();
        let topic = |t: &str| match t.chars().next() {
            Some('a') => Some(0),
            Some('b') => Some(1),
            _ => None,
        };
        assert!((r.purity(topic) - 9.0 / 10.0).abs() < 1e-12);
        assert_eq!(r.top_topic(20, topic), vec![Some((0, 2)), Some((1, 1))]);
        assert_eq!(r.top_words(1)[1], vec![("the".to_string(), 10)]);
    }
}
