//! Cross-entropy, word-level entropy, class-level peak reward and the
//! combined training objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, TensorError, Var};
use crate::data::Batch;
use crate::model::{ForwardGraph, ModelConfig};

/// Floor applied before every `log` in this module.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("empty batch")]
    EmptyBatch,
}

type Result<T> = std::result::Result<T, LossError>;

/// Mean over the batch of `−log(max(y[i, label_i], 1e-12))`.
pub fn cross_entropy<S: Scalar>(tape: &mut Tape<'_, S>, probs: Var, labels: &[usize]) -> Result<Var> {
    let (b, n_classes) = tape.value(probs).dims2()?;
    if labels.is_empty() || labels.len() != b {
        return Err(LossError::EmptyBatch);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(LossError::LabelOutOfRange { label, n_classes });
    }
    let picks: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * n_classes + l).collect();
    let picked = tape.select(probs, &picks)?;
    let floored = tape.clamp_min(picked, S::from_f64(LOG_FLOOR))?;
    let logs = tape.log(floored)?;
    let total = tape.sum(logs)?;
    Ok(tape.scale(total, S::from_f64(-1.0 / b as f64))?)
}

/// Batch mean of per-sample word entropies `−Σ_t Σ_k a_tk log a_tk`.
///
/// `assignment` holds one cluster distribution per row; masked rows are
/// all-zero and contribute nothing (`0·log 0 = 0`).
pub fn word_entropy<S: Scalar>(tape: &mut Tape<'_, S>, assignment: Var, batch_size: usize) -> Result<Var> {
    if batch_size == 0 {
        return Err(LossError::EmptyBatch);
    }
    let floored = tape.clamp_min(assignment, S::from_f64(LOG_FLOOR))?;
    let logs = tape.log(floored)?;
    let plogp = tape.hadamard(assignment, logs)?;
    let total = tape.sum(plogp)?;
    Ok(tape.scale(total, S::from_f64(-1.0 / batch_size as f64))?)
}

/// Text- and class-level cluster distributions of one batch.
#[derive(Clone, Debug)]
pub struct ClassDistributions {
    /// `[B × m]`: mean assignment over each text's real words.
    pub text: Var,
    /// `[K × m]`: mean of `text` over the samples of each present class.
    pub class: Var,
    /// Class label of each row of `class`, ascending.
    pub classes: Vec<usize>,
}

/// `row_groups[r]` is the sample owning assignment row `r`; `words[b]` is
/// the number of real words of sample `b`. Classes absent from the batch
/// get no row.
pub fn class_distributions<S: Scalar>(
    tape: &mut Tape<'_, S>,
    assignment: Var,
    row_groups: &[usize],
    words: &[usize],
    labels: &[usize],
) -> Result<ClassDistributions> {
    let b = labels.len();
    if b == 0 || words.len() != b {
        return Err(LossError::EmptyBatch);
    }
    let sums = tape.segment_sum(assignment, row_groups, b)?;
    let inv_words: Vec<S> = words.iter().map(|&n| S::from_f64(1.0 / n.max(1) as f64)).collect();
    let text = tape.row_scale(sums, &inv_words)?;

    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let slot: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    let mut counts = vec![0usize; classes.len()];
    for &s in &slot {
        counts[s] += 1;
    }
    let class_sums = tape.segment_sum(text, &slot, classes.len())?;
    let inv_counts: Vec<S> = counts.iter().map(|&n| S::from_f64(1.0 / n as f64)).collect();
    let class = tape.row_scale(class_sums, &inv_counts)?;
    Ok(ClassDistributions { text, class, classes })
}

/// `Σ_i max_j v_{c_j}[i]` over the present classes.
pub fn class_regularizer<S: Scalar>(tape: &mut Tape<'_, S>, class_dists: Var) -> Result<Var> {
    let peaks = tape.column_max(class_dists)?;
    Ok(tape.sum(peaks)?)
}

/// `ce + λ1·word − λ2·class`; the batch means are already inside `ce` and
/// `word`.
pub fn total_loss<S: Scalar>(
    tape: &mut Tape<'_, S>,
    ce: Var,
    word: Var,
    class: Var,
    lambda1: f64,
    lambda2: f64,
) -> Result<Var> {
    let w = tape.scale(word, S::from_f64(lambda1))?;
    let c = tape.scale(class, S::from_f64(lambda2))?;
    let sum = tape.add(ce, w)?;
    Ok(tape.sub(sum, c)?)
}

/// Scalar values of every loss term for one batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_ce")]
    pub ce: f64,
    #[serde(rename = "L_word")]
    pub word: f64,
    #[serde(rename = "L_class")]
    pub class: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
    /// `(class label, v_c)` for each class present in the batch.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub class_distributions: Vec<(usize, Vec<f64>)>,
}

/// Tape handles for the full objective of one batch.
#[derive(Clone, Debug)]
pub struct Objective {
    pub ce: Var,
    pub word: Var,
    pub class: Var,
    pub total: Var,
    pub distributions: ClassDistributions,
}

pub fn objective<S: Scalar>(
    tape: &mut Tape<'_, S>,
    graph: &ForwardGraph,
    batch: &Batch,
    config: &ModelConfig,
) -> Result<Objective> {
    let ce = cross_entropy(tape, graph.probs, &batch.labels)?;
    let word = word_entropy(tape, graph.assignment, batch.size())?;
    let distributions = class_distributions(
        tape,
        graph.assignment,
        &graph.layout.groups(),
        &batch.lengths,
        &batch.labels,
    )?;
    let class = class_regularizer(tape, distributions.class)?;
    let total = total_loss(tape, ce, word, class, config.lambda1, config.lambda2)?;
    Ok(Objective {
        ce,
        word,
        class,
        total,
        distributions,
    })
}

impl Objective {
    pub fn breakdown<S: Scalar>(&self, tape: &Tape<'_, S>) -> LossBreakdown {
        let class_rows = tape.value(self.distributions.class);
        LossBreakdown {
            ce: tape.value(self.ce).item().to_f64(),
            word: tape.value(self.word).item().to_f64(),
            class: tape.value(self.class).item().to_f64(),
            total: tape.value(self.total).item().to_f64(),
            class_distributions: self
                .distributions
                .classes
                .iter()
                .enumerate()
                .map(|(k, &c)| (c, class_rows.row(k).iter().map(|v| v.to_f64()).collect()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    fn ce_of(rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let y = tape.leaf(Tensor::matrix(rows));
        let l = cross_entropy(&mut tape, y, labels)?;
        Ok(tape.value(l).item())
    }

    /// Assignment rows of one sample, given as word columns.
    fn entropy_of(columns: &[Vec<f64>]) -> f64 {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::matrix(columns));
        let l = word_entropy(&mut tape, a, 1).unwrap();
        tape.value(l).item()
    }

    fn l_class(rows: &[Vec<f64>]) -> f64 {
        let mut tape = Tape::<f64>::new();
        let v = tape.leaf(Tensor::matrix(rows));
        let l = class_regularizer(&mut tape, v).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(close(ce_of(&[vec![0.25; 4]], &[3]).unwrap(), 4f64.ln(), 1e-12));
        assert_eq!(ce_of(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        assert!(close(ce_of(&[vec![0.7, 0.3]], &[0]).unwrap(), -(0.7f64.ln()), 1e-12));
        assert!(close(-(0.7f64.ln()), 0.3567, 1e-4));
        // zero probability is floored, not an error
        assert!(close(ce_of(&[vec![1.0, 0.0]], &[1]).unwrap(), -(1e-12f64.ln()), 1e-9));
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        assert_eq!(
            ce_of(&[vec![0.5, 0.5]], &[2]),
            Err(LossError::LabelOutOfRange { label: 2, n_classes: 2 })
        );
    }

    #[test]
    fn word_entropy_examples() {
        assert_eq!(entropy_of(&[vec![0.0, 1.0, 0.0, 0.0]]), 0.0);
        let uniform = vec![0.25; 4];
        assert!(close(entropy_of(&[uniform.clone()]), 4f64.ln(), 1e-12));
        let three = entropy_of(&[uniform.clone(), uniform.clone(), uniform]);
        assert!(close(three, 3.0 * 4f64.ln(), 1e-12));
        assert!(close(three, 4.1589, 1e-4));
        // masked (all-zero) rows add nothing
        assert_eq!(entropy_of(&[vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]]), 0.0);
    }

    #[test]
    fn word_entropy_is_batch_meaned() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::matrix(&[vec![0.5, 0.5], vec![1.0, 0.0]]));
        let l = word_entropy(&mut tape, a, 2).unwrap();
        assert!(close(tape.value(l).item(), 2f64.ln() / 2.0, 1e-12));
    }

    #[test]
    fn class_distribution_examples() {
        let mut tape = Tape::<f64>::new();
        // sample 0: one word [0.2, 0.8]; sample 1 (same class 1): words [1,0], [0,1] rows interleaved
        let a = tape.leaf(Tensor::matrix(&[
            vec![0.2, 0.8],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 1.0],
        ]));
        let d = class_distributions(&mut tape, a, &[0, 1, 0, 1], &[1, 2], &[1, 1]).unwrap();
        let text = tape.value(d.text);
        assert_eq!(text.row(0), &[0.2, 0.8]);
        assert_eq!(text.row(1), &[0.5, 0.5]);
        assert_eq!(d.classes, vec![1]);
        let class = tape.value(d.class);
        assert!(close(class.at(0, 0), 0.35, 1e-12) && close(class.at(0, 1), 0.65, 1e-12));
    }

    #[test]
    fn class_mean_of_disjoint_texts() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let d = class_distributions(&mut tape, a, &[0, 1], &[1, 1], &[0, 0]).unwrap();
        assert_eq!(tape.value(d.class).row(0), &[0.5, 0.5]);
    }

    #[test]
    fn class_regularizer_examples() {
        assert_eq!(l_class(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 2.0);
        assert_eq!(l_class(&[vec![0.5, 0.5], vec![0.5, 0.5]]), 1.0);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::matrix(&[vec![1.0]]));
        assert_eq!(
            class_distributions(&mut tape, a, &[0], &[], &[]).unwrap_err(),
            LossError::EmptyBatch
        );
    }

    #[test]
    fn total_loss_arithmetic() {
        let mut tape = Tape::<f64>::new();
        let ce = tape.leaf(Tensor::scalar(1.0));
        let w = tape.leaf(Tensor::scalar(10.0));
        let c = tape.leaf(Tensor::scalar(2.0));
        let t = total_loss(&mut tape, ce, w, c, 0.001, 0.001).unwrap();
        assert!(close(tape.value(t).item(), 1.008, 1e-12));
        let t0 = total_loss(&mut tape, ce, w, c, 0.0, 0.0).unwrap();
        assert_eq!(tape.value(t0).item(), 1.0);
    }

    #[test]
    fn breakdown_serializes_with_loss_keys() {
        let b = LossBreakdown {
            ce: 1.0,
            word: 2.0,
            class: 1.5,
            total: 0.5,
            class_distributions: vec![],
        };
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, r#"{"L_ce":1.0,"L_word":2.0,"L_class":1.5,"L_total":0.5}"#);
    }

    fn distribution(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn class_regularizer_bounds(
            m in 1usize..6,
            raw in proptest::collection::vec(proptest::collection::vec(0.001f64..1.0, 6), 1..6),
        ) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| distribution(&r[..m])).collect();
            let v = l_class(&rows);
            prop_assert!(v >= 1.0 - 1e-12);
            prop_assert!(v <= (m.min(rows.len())) as f64 + 1e-12);
        }

        #[test]
        fn text_and_class_distributions_sum_to_one(
            lens in proptest::collection::vec(1usize..5, 1..5),
            raw in proptest::collection::vec(0.001f64..1.0, 60),
            labels_raw in proptest::collection::vec(0usize..3, 5),
        ) {
            let m = 3;
            let b = lens.len();
            let t_max = *lens.iter().max().unwrap();
            let mut rows = Vec::new();
            let mut groups = Vec::new();
            let mut k = 0;
            for t in 0..t_max {
                for (bi, &len) in lens.iter().enumerate() {
                    if t < len {
                        rows.push(distribution(&raw[k..k + m]));
                        k += m;
                    } else {
                        rows.push(vec![0.0; m]);
                    }
                    groups.push(bi);
                }
            }
            let labels = &labels_raw[..b];
            let mut tape = Tape::<f64>::new();
            let a = tape.leaf(Tensor::matrix(&rows));
            let d = class_distributions(&mut tape, a, &groups, &lens, labels).unwrap();
            for v in [tape.value(d.text), tape.value(d.class)] {
                let (r, _) = v.dims2().unwrap();
                for i in 0..r {
                    let s: f64 = v.row(i).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-6);
                    prop_assert!(v.row(i).iter().all(|&x| x >= 0.0));
                }
            }
        }
    }
}
