//! Scalar-loop reference for the forward pass and loss terms, written
//! without the tape so it can check it.

use lscr::model::{Param, Parameters};

pub struct Weights {
    tensors: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Weights {
    pub fn from_params<S: lscr::autodiff::Scalar>(p: &Parameters<S>) -> Self {
        Weights {
            tensors: Param::ALL
                .iter()
                .map(|&k| {
                    let t = p.get(k);
                    (t.shape().to_vec(), t.to_f64_vec())
                })
                .collect(),
        }
    }

    fn get(&self, p: Param) -> &(Vec<usize>, Vec<f64>) {
        &self.tensors[p.index()]
    }

    /// `W·x + b` with `W` stored row-major `[out × in]`.
    fn affine(&self, w: Param, b: Param, x: &[f64]) -> Vec<f64> {
        let (shape, wd) = self.get(w);
        let (out, inp) = (shape[0], shape[1]);
        assert_eq!(x.len(), inp);
        let bias = &self.get(b).1;
        (0..out)
            .map(|i| {
                let mut acc = bias[i];
                for k in 0..inp {
                    acc += wd[i * inp + k] * x[k];
                }
                acc
            })
            .collect()
    }

    fn matvec(&self, w: Param, x: &[f64]) -> Vec<f64> {
        let (shape, wd) = self.get(w);
        let (out, inp) = (shape[0], shape[1]);
        (0..out)
            .map(|i| (0..inp).map(|k| wd[i * inp + k] * x[k]).sum())
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub struct SampleOutput {
    pub probs: Vec<f64>,
    /// `[m][n]`
    pub assignment: Vec<Vec<f64>>,
    /// `[m][d_c]`
    pub gated: Vec<Vec<f64>>,
    pub text: Vec<f64>,
}

fn lstm(w: &Weights, xs: &[Vec<f64>], d_h: usize, dir: [Param; 3]) -> Vec<Vec<f64>> {
    let [wi, wh, b] = dir;
    let (mut h, mut c) = (vec![0.0; d_h], vec![0.0; d_h]);
    let mut out = Vec::new();
    for x in xs {
        let zx = w.affine(wi, b, x);
        let zh = w.matvec(wh, &h);
        let z: Vec<f64> = zx.iter().zip(&zh).map(|(a, b)| a + b).collect();
        for k in 0..d_h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[d_h + k]);
            let g = z[2 * d_h + k].tanh();
            let o = sigmoid(z[3 * d_h + k]);
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        out.push(h.clone());
    }
    out
}

/// Forward pass of one unpadded token sequence.
pub fn forward_sample(w: &Weights, tokens: &[usize], d_h: usize, m: usize) -> SampleOutput {
    let (eshape, edata) = w.get(Param::Embedding);
    let d_e = eshape[1];
    let xs: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&t| {
            if t == 0 {
                vec![0.0; d_e]
            } else {
                edata[t * d_e..(t + 1) * d_e].to_vec()
            }
        })
        .collect();
    let hf = lstm(w, &xs, d_h, [Param::FwdInput, Param::FwdRecurrent, Param::FwdBias]);
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let mut hb = lstm(w, &rev, d_h, [Param::BwdInput, Param::BwdRecurrent, Param::BwdBias]);
    hb.reverse();
    let rs: Vec<Vec<f64>> = (0..xs.len())
        .map(|t| [xs[t].clone(), hf[t].clone(), hb[t].clone()].concat())
        .collect();

    let n = rs.len();
    let mut assignment = vec![vec![0.0; n]; m];
    for (t, r) in rs.iter().enumerate() {
        let hidden: Vec<f64> = w
            .affine(Param::ClusterW1, Param::ClusterB1, r)
            .into_iter()
            .map(relu)
            .collect();
        let probs = softmax(&w.affine(Param::ClusterW2, Param::ClusterB2, &hidden));
        for i in 0..m {
            assignment[i][t] = probs[i];
        }
    }

    let d_r = rs[0].len();
    let mut gated = Vec::new();
    for i in 0..m {
        let mut pooled = vec![0.0; d_r];
        for t in 0..n {
            for k in 0..d_r {
                pooled[k] += assignment[i][t] * rs[t][k];
            }
        }
        let c: Vec<f64> = w
            .affine(Param::ComposeW, Param::ComposeB, &pooled)
            .into_iter()
            .map(relu)
            .collect();
        let g: Vec<f64> = w
            .affine(Param::GateW, Param::GateB, &c)
            .into_iter()
            .map(sigmoid)
            .collect();
        gated.push(c.iter().zip(&g).map(|(a, b)| a * b).collect::<Vec<f64>>());
    }
    let text: Vec<f64> = gated.concat();
    let hidden: Vec<f64> = w
        .affine(Param::ClassifierW1, Param::ClassifierB1, &text)
        .into_iter()
        .map(relu)
        .collect();
    let probs = softmax(&w.affine(Param::ClassifierW2, Param::ClassifierB2, &hidden));
    SampleOutput {
        probs,
        assignment,
        gated,
        text,
    }
}

/// Reference objective over a batch of unpadded sequences.
pub fn total_loss(
    w: &Weights,
    seqs: &[Vec<usize>],
    labels: &[usize],
    d_h: usize,
    m: usize,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let outs: Vec<SampleOutput> = seqs.iter().map(|s| forward_sample(w, s, d_h, m)).collect();
    let n = seqs.len() as f64;
    let mut ce = 0.0;
    let mut word = 0.0;
    let mut v_s = Vec::new();
    for (o, &l) in outs.iter().zip(labels) {
        ce += -o.probs[l].max(1e-12).ln();
        let words = o.assignment[0].len();
        let mut v = vec![0.0; m];
        for t in 0..words {
            for i in 0..m {
                let a = o.assignment[i][t];
                if a > 0.0 {
                    word -= a * a.max(1e-12).ln();
                }
                v[i] += a / words as f64;
            }
        }
        v_s.push(v);
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let mut l_class = 0.0;
    let v_c: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let members: Vec<&Vec<f64>> = v_s
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(v, _)| v)
                .collect();
            (0..m)
                .map(|i| members.iter().map(|v| v[i]).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect();
    for i in 0..m {
        l_class += v_c.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
    }
    (ce + lambda1 * word) / n - lambda2 * l_class
}
