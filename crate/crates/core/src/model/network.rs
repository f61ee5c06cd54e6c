//! Forward pass: embedding → bi-LSTM → soft clustering → gated cluster
//! vectors → classifier.
//!
//! Word-level tensors are stacked time-major: row `t·B + b` holds position
//! `t` of sample `b`.

use super::{ModelConfig, ModelError, Param, ParamVars, Parameters};
use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::data::{Batch, PAD};

/// Time-major row bookkeeping for one batch.
#[derive(Clone, Debug)]
pub struct RowLayout {
    pub batch: usize,
    pub time: usize,
}

impl RowLayout {
    pub fn of(batch: &Batch) -> Self {
        RowLayout {
            batch: batch.size(),
            time: batch.time(),
        }
    }

    pub fn row(&self, b: usize, t: usize) -> usize {
        t * self.batch + b
    }

    pub fn rows(&self) -> usize {
        self.batch * self.time
    }

    /// Sample owning each stacked row.
    pub fn groups(&self) -> Vec<usize> {
        (0..self.rows()).map(|r| r % self.batch).collect()
    }

    pub fn row_mask(&self, batch: &Batch) -> Vec<bool> {
        (0..self.rows())
            .map(|r| batch.is_real(r % self.batch, r / self.batch))
            .collect()
    }
}

/// Word embeddings per time step, each `[B×d_e]`. PAD maps to zeros.
pub fn embed<S: Scalar>(tape: &mut Tape<'_, S>, p: &ParamVars, batch: &Batch) -> Result<Vec<Var>, ModelError> {
    (0..batch.time())
        .map(|t| {
            tape.embedding(p[Param::Embedding], &batch.column(t), Some(PAD))
                .map_err(ModelError::from)
        })
        .collect()
}

/// Contextual representations `r_t = [x_t; h→_t; h←_t]` per step, each
/// `[B×d_r]`. Recurrent state is carried unchanged through padding and the
/// hidden part of padded outputs is zero.
pub fn encode<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    xs: &[Var],
    batch: &Batch,
    d_h: usize,
) -> Result<Vec<Var>, ModelError> {
    let masks: Vec<Vec<bool>> = (0..batch.time()).map(|t| batch.mask_column(t)).collect();
    let fwd = lstm_direction(
        tape,
        [p[Param::FwdInput], p[Param::FwdRecurrent], p[Param::FwdBias]],
        xs,
        &masks,
        d_h,
        false,
    )?;
    let bwd = lstm_direction(
        tape,
        [p[Param::BwdInput], p[Param::BwdRecurrent], p[Param::BwdBias]],
        xs,
        &masks,
        d_h,
        true,
    )?;
    xs.iter()
        .zip(fwd.iter().zip(&bwd))
        .map(|(&x, (&f, &b))| tape.concat_cols(&[x, f, b]).map_err(ModelError::from))
        .collect()
}

/// One LSTM direction with zero initial state. Gate layout in the stacked
/// weights is input, forget, cell, output. Returns outputs in time order.
pub fn lstm_direction<S: Scalar>(
    tape: &mut Tape<'_, S>,
    [w_ih, w_hh, bias]: [Var; 3],
    xs: &[Var],
    masks: &[Vec<bool>],
    d_h: usize,
    reverse: bool,
) -> Result<Vec<Var>, ModelError> {
    let b = masks.first().map_or(0, Vec::len);
    let mut h = tape.leaf(Tensor::zeros(&[b, d_h]));
    let mut c = tape.leaf(Tensor::zeros(&[b, d_h]));
    let mut outputs = vec![None; xs.len()];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in steps {
        let mask = &masks[t];
        let zx = tape.linear(xs[t], w_ih, bias)?;
        let zh = tape.matmul_bt(h, w_hh)?;
        let z = tape.add(zx, zh)?;
        let i_pre = tape.slice_cols(z, 0, d_h)?;
        let f_pre = tape.slice_cols(z, d_h, d_h)?;
        let g_pre = tape.slice_cols(z, 2 * d_h, d_h)?;
        let o_pre = tape.slice_cols(z, 3 * d_h, d_h)?;
        let i = tape.sigmoid(i_pre)?;
        let f = tape.sigmoid(f_pre)?;
        let g = tape.tanh(g_pre)?;
        let o = tape.sigmoid(o_pre)?;
        let fc = tape.hadamard(f, c)?;
        let ig = tape.hadamard(i, g)?;
        let c_new = tape.add(fc, ig)?;
        let c_act = tape.tanh(c_new)?;
        let h_new = tape.hadamard(o, c_act)?;
        c = tape.where_rows(mask, c_new, c)?;
        h = tape.where_rows(mask, h_new, h)?;
        let keep: Vec<S> = mask.iter().map(|&m| if m { S::one() } else { S::zero() }).collect();
        outputs[t] = Some(tape.row_scale(h_new, &keep)?);
    }
    Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
}

/// Cluster probabilities per stacked word row:
/// `softmax(W2·relu(W1·r + b1) + b2)` over the `m` clusters. Masked rows
/// are zero. Returns `[T·B × m]`.
pub fn cluster_assign<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    r_rows: Var,
    row_mask: &[bool],
) -> Result<Var, ModelError> {
    let h = tape.linear(r_rows, p[Param::ClusterW1], p[Param::ClusterB1])?;
    let h = tape.relu(h)?;
    let logits = tape.linear(h, p[Param::ClusterW2], p[Param::ClusterB2])?;
    Ok(tape.softmax_rows(logits, Some(row_mask))?)
}

/// Cluster vectors `C = relu(Ws·(A·R) + bs)` for every sample, stacked as
/// `[B·m × d_c]` (row `b·m + i` is cluster `i` of sample `b`).
pub fn compose_clusters<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    a_rows: Var,
    r_rows: Var,
    layout: &RowLayout,
) -> Result<Var, ModelError> {
    let pooled = tape.weighted_pool(a_rows, r_rows, &layout.groups(), layout.batch)?;
    let c = tape.linear(pooled, p[Param::ComposeW], p[Param::ComposeB])?;
    Ok(tape.relu(c)?)
}

pub struct Gated {
    /// `[B·m × d_c]`
    pub gates: Var,
    /// `[B·m × d_c]`
    pub gated: Var,
    /// `[B × m·d_c]`
    pub text: Var,
}

/// `g_i = σ(Wg·c_i + bg)` with one shared gate map, `c̄_i = g_i ⊙ c_i`, and
/// the text vector `s = [c̄_1; …; c̄_m]`.
pub fn gate_and_aggregate<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    clusters: Var,
    batch: usize,
    config: &ModelConfig,
) -> Result<Gated, ModelError> {
    let pre = tape.linear(clusters, p[Param::GateW], p[Param::GateB])?;
    let gates = tape.sigmoid(pre)?;
    let gated = tape.hadamard(gates, clusters)?;
    let text = tape.reshape(gated, &[batch, config.d_s()])?;
    Ok(Gated { gates, gated, text })
}

/// `y = softmax(Wc2·relu(Wc1·s + bc1) + bc2)`, `[B × N_C]`.
pub fn classify<S: Scalar>(tape: &mut Tape<'_, S>, p: &ParamVars, text: Var) -> Result<Var, ModelError> {
    let h = tape.linear(text, p[Param::ClassifierW1], p[Param::ClassifierB1])?;
    let h = tape.relu(h)?;
    let logits = tape.linear(h, p[Param::ClassifierW2], p[Param::ClassifierB2])?;
    Ok(tape.softmax_rows(logits, None)?)
}

/// Tape handles for every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardGraph {
    pub layout: RowLayout,
    pub row_mask: Vec<bool>,
    /// `[T·B × d_r]`
    pub words: Var,
    /// `[T·B × m]`
    pub assignment: Var,
    /// `[B·m × d_c]`
    pub clusters: Var,
    pub gates: Var,
    pub gated: Var,
    /// `[B × m·d_c]`
    pub text: Var,
    /// `[B × N_C]`
    pub probs: Var,
}

pub fn forward<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    batch: &Batch,
    config: &ModelConfig,
) -> Result<ForwardGraph, ModelError> {
    if let Some(&bad) = batch.indices.iter().find(|&&i| i >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            index: bad,
            vocab_size: config.vocab_size,
        });
    }
    let layout = RowLayout::of(batch);
    let row_mask = layout.row_mask(batch);
    let xs = embed(tape, p, batch)?;
    let rs = encode(tape, p, &xs, batch, config.d_h)?;
    let words = tape.concat_rows(&rs)?;
    let assignment = cluster_assign(tape, p, words, &row_mask)?;
    let clusters = compose_clusters(tape, p, assignment, words, &layout)?;
    let Gated { gates, gated, text } = gate_and_aggregate(tape, p, clusters, layout.batch, config)?;
    let probs = classify(tape, p, text)?;
    Ok(ForwardGraph {
        layout,
        row_mask,
        words,
        assignment,
        clusters,
        gates,
        gated,
        text,
        probs,
    })
}

/// Forward pass on a throwaway tape, returning only the materialized
/// outputs.
pub fn infer<S: Scalar>(
    params: &Parameters<S>,
    batch: &Batch,
    config: &ModelConfig,
) -> Result<ForwardOutput<S>, ModelError> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let graph = forward(&mut tape, &vars, batch, config)?;
    Ok(graph.output(&tape))
}

/// Materialized forward results, laid out per sample.
#[derive(Clone, Debug)]
pub struct ForwardOutput<S: Scalar> {
    /// `[B × N_C]`
    pub probs: Tensor<S>,
    /// `[B × m × T]`; column `t` of sample `b` is word `t`'s distribution.
    pub assignment: Tensor<S>,
    /// `[B × m × d_c]`
    pub gated: Tensor<S>,
    /// `[B × m·d_c]`
    pub text: Tensor<S>,
}

impl ForwardGraph {
    pub fn output<S: Scalar>(&self, tape: &Tape<'_, S>) -> ForwardOutput<S> {
        let (b, t) = (self.layout.batch, self.layout.time);
        let a_rows = tape.value(self.assignment);
        let m = a_rows.shape()[1];
        let mut a = vec![S::zero(); b * m * t];
        for bi in 0..b {
            for ti in 0..t {
                let row = a_rows.row(self.layout.row(bi, ti));
                for (i, &v) in row.iter().enumerate() {
                    a[(bi * m + i) * t + ti] = v;
                }
            }
        }
        let gated = tape.value(self.gated);
        let d_c = gated.shape()[1];
        ForwardOutput {
            probs: tape.value(self.probs).clone(),
            assignment: Tensor::new(vec![b, m, t], a).expect("assignment shape"),
            gated: gated.clone().reshape(vec![b, m, d_c]).expect("gated shape"),
            text: tape.value(self.text).clone(),
        }
    }
}

impl<S: Scalar> ForwardOutput<S> {
    pub fn batch(&self) -> usize {
        self.probs.shape()[0]
    }

    /// `m × T` assignment matrix of sample `b`, as rows.
    pub fn assignment_of(&self, b: usize) -> Vec<Vec<S>> {
        let (m, t) = (self.assignment.shape()[1], self.assignment.shape()[2]);
        let data = self.assignment.data();
        (0..m)
            .map(|i| data[(b * m + i) * t..(b * m + i + 1) * t].to_vec())
            .collect()
    }

    /// Predicted class of each sample; ties go to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.batch()).map(|b| argmax(self.probs.row(b))).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
