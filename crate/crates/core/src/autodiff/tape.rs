use std::borrow::Cow;

use super::kernels;
use super::{Scalar, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Element-wise operations reachable through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Relu,
    Sigmoid,
    Tanh,
    Log,
    Hadamard,
    Add,
    /// `[p×n] + [n]`, bias broadcast over rows.
    AddBias,
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, S),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    ClampMin(Var, S),
    SoftmaxRows(Var),
    Transpose(Var),
    Embedding {
        table: Var,
        indices: Vec<usize>,
        pad: Option<usize>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        input: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    RowScale(Var, Vec<S>),
    WhereRows {
        mask: Vec<bool>,
        on: Var,
        off: Var,
    },
    WeightedPool {
        weights: Var,
        values: Var,
        groups: Vec<usize>,
    },
    SegmentSum {
        input: Var,
        groups: Vec<usize>,
    },
    Reshape(Var),
    Sum(Var),
    ColumnMax {
        input: Var,
        argmax: Vec<usize>,
    },
    Select {
        input: Var,
        indices: Vec<usize>,
    },
}

struct Node<'a, S: Scalar> {
    value: Cow<'a, Tensor<S>>,
    op: Op<S>,
}

/// Linear record of a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every record's inputs precede
/// it. Leaves may borrow their tensors (`'a`), which lets a forward pass
/// register large parameter tensors without copying them.
pub struct Tape<'a, S: Scalar> {
    nodes: Vec<Node<'a, S>>,
    #[cfg(test)]
    pub(crate) corrupt_sigmoid: bool,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Self::new()
    }
}

type Result<T> = std::result::Result<T, TensorError>;

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            #[cfg(test)]
            corrupt_sigmoid: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records an owned leaf (input or constant).
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        self.push_unchecked(Cow::Owned(t), Op::Leaf)
    }

    /// Records a leaf that borrows its data, typically a parameter tensor.
    pub fn leaf_ref(&mut self, t: &'a Tensor<S>) -> Var {
        self.push_unchecked(Cow::Borrowed(t), Op::Leaf)
    }

    fn push_unchecked(&mut self, value: Cow<'a, Tensor<S>>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<S>, op: Op<S>) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        Ok(self.push_unchecked(Cow::Owned(value), op))
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Result<Var> {
        let out = self.value(a).map(f);
        self.push(name, out, op)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(S, S) -> S, op: Op<S>) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, out, op)
    }

    /// `a[p×q] · b[q×r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.dims2(a)?;
        let (q2, r) = self.dims2(b)?;
        if q != q2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![p, q],
                right: vec![q2, r],
            });
        }
        let data = kernels::mm(self.value(a).data(), self.value(b).data(), p, q, r);
        self.push("matmul", Tensor::new(vec![p, r], data)?, Op::MatMul(a, b))
    }

    /// `a[p×q] · b[r×q]ᵀ`: the affine-map form `x·Wᵀ` used by every dense layer.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.dims2(a)?;
        let (r, q2) = self.dims2(b)?;
        if q != q2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_bt",
                left: vec![p, q],
                right: vec![r, q2],
            });
        }
        let data = kernels::mm_bt(self.value(a).data(), self.value(b).data(), p, q, r);
        self.push("matmul_bt", Tensor::new(vec![p, r], data)?, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("hadamard", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds `bias[n]` to every row of `a[p×n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (p, n) = self.dims2(a)?;
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: vec![p, n],
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &bv) in row.iter_mut().zip(b) {
                *x += bv;
            }
        }
        self.push("add_bias", Tensor::new(vec![p, n], data)?, Op::AddBias(a, bias))
    }

    /// `x·Wᵀ + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul_bt(x, weight)?;
        self.add_bias(xw, bias)
    }

    pub fn scale(&mut self, a: Var, k: S) -> Result<Var> {
        self.unary("scale", a, |x| x * k, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let zero = S::zero();
        self.unary("relu", a, |x| if x > zero { x } else { zero }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, kernels::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, |x| x.tanh(), Op::Tanh(a))
    }

    /// Natural log. Strict: any non-positive input is a domain error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > S::zero())) {
            return Err(TensorError::Domain {
                op: "log",
                value: bad.to_f64(),
            });
        }
        self.unary("log", a, |x| x.ln(), Op::Log(a))
    }

    /// `max(a, floor)`; gradient flows only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: S) -> Result<Var> {
        self.unary(
            "clamp_min",
            a,
            |x| if x > floor { x } else { floor },
            Op::ClampMin(a, floor),
        )
    }

    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Relu | Elementwise::Sigmoid | Elementwise::Tanh | Elementwise::Log => 1,
            Elementwise::Hadamard | Elementwise::Add | Elementwise::AddBias => 2,
        };
        if operands.len() != arity {
            return Err(TensorError::Arity {
                op: "elementwise",
                expected: arity,
                got: operands.len(),
            });
        }
        match kind {
            Elementwise::Relu => self.relu(operands[0]),
            Elementwise::Sigmoid => self.sigmoid(operands[0]),
            Elementwise::Tanh => self.tanh(operands[0]),
            Elementwise::Log => self.log(operands[0]),
            Elementwise::Hadamard => self.hadamard(operands[0], operands[1]),
            Elementwise::Add => self.add(operands[0], operands[1]),
            Elementwise::AddBias => self.add_bias(operands[0], operands[1]),
        }
    }

    /// Row-wise softmax of `z[r×c]`, max-subtracted. Rows whose `row_mask`
    /// entry is false become exact zeros.
    pub fn softmax_rows(&mut self, z: Var, row_mask: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.dims2(z)?;
        if let Some(mask) = row_mask {
            if mask.len() != r {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_rows",
                    left: vec![r, c],
                    right: vec![mask.len()],
                });
            }
        }
        let src = self.value(z);
        if !src.all_finite() {
            return Err(TensorError::NonFinite { op: "softmax_rows" });
        }
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            if row_mask.is_some_and(|m| !m[i]) {
                continue;
            }
            kernels::softmax_into(src.row(i), &mut data[i * c..(i + 1) * c]);
        }
        self.push("softmax_rows", Tensor::new(vec![r, c], data)?, Op::SoftmaxRows(z))
    }

    /// Column-wise softmax of `z[m×n]`; columns with `mask[j] == false` are
    /// all-zero.
    pub fn softmax_columns(&mut self, z: Var, mask: &[bool]) -> Result<Var> {
        let zt = self.transpose(z)?;
        let s = self.softmax_rows(zt, Some(mask))?;
        self.transpose(s)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let data = kernels::transpose(self.value(a).data(), r, c);
        self.push("transpose", Tensor::new(vec![c, r], data)?, Op::Transpose(a))
    }

    /// Gathers rows of `table[V×d]`. Positions holding `pad` yield zero rows
    /// and send no gradient back to the table.
    pub fn embedding(&mut self, table: Var, indices: &[usize], pad: Option<usize>) -> Result<Var> {
        let (v, d) = self.dims2(table)?;
        if indices.is_empty() {
            return Err(TensorError::InvalidShape { shape: vec![0, d] });
        }
        let t = self.value(table);
        let mut data = vec![S::zero(); indices.len() * d];
        for (k, &ix) in indices.iter().enumerate() {
            if ix >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: ix,
                    bound: v,
                });
            }
            if Some(ix) != pad {
                data[k * d..(k + 1) * d].copy_from_slice(t.row(ix));
            }
        }
        let out = Tensor::new(vec![indices.len(), d], data)?;
        self.push(
            "embedding",
            out,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
                pad,
            },
        )
    }

    /// Horizontal concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let (rows, _) = self.dims2(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]).to_vec(),
                    right: vec![r, c],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(
            "concat_cols",
            Tensor::new(vec![rows, total], data)?,
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Columns `start..start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if len == 0 || start + len > c {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: c,
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..start + len]);
        }
        self.push(
            "slice_cols",
            Tensor::new(vec![r, len], data)?,
            Op::SliceCols { input: a, start },
        )
    }

    /// Vertical concatenation of rank-2 tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let (_, cols) = self.dims2(parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]).to_vec(),
                    right: vec![r, c],
                });
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(
            "concat_rows",
            Tensor::new(vec![rows, cols], data)?,
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Multiplies row `i` of `a` by the constant `factors[i]`.
    pub fn row_scale(&mut self, a: Var, factors: &[S]) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if factors.len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "row_scale",
                left: vec![r, c],
                right: vec![factors.len()],
            });
        }
        let mut data = self.value(a).data().to_vec();
        for (row, &f) in data.chunks_mut(c).zip(factors) {
            row.iter_mut().for_each(|x| *x = *x * f);
        }
        self.push(
            "row_scale",
            Tensor::new(vec![r, c], data)?,
            Op::RowScale(a, factors.to_vec()),
        )
    }

    /// Row `i` taken from `on` where `mask[i]`, otherwise from `off`.
    pub fn where_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        self.same_shape("where_rows", on, off)?;
        let (r, c) = self.dims2(on)?;
        if mask.len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "where_rows",
                left: vec![r, c],
                right: vec![mask.len()],
            });
        }
        let mut data = Vec::with_capacity(r * c);
        for (i, &m) in mask.iter().enumerate() {
            let src = if m { on } else { off };
            data.extend_from_slice(self.value(src).row(i));
        }
        self.push(
            "where_rows",
            Tensor::new(vec![r, c], data)?,
            Op::WhereRows {
                mask: mask.to_vec(),
                on,
                off,
            },
        )
    }

    /// Grouped weighted sum. With `weights[N×m]`, `values[N×d]` and
    /// `groups[n] ∈ [0, G)`, returns `[G·m × d]` where row `g·m + i` is
    /// `Σ_{n: groups[n]=g} weights[n,i] · values[n,:]`.
    pub fn weighted_pool(&mut self, weights: Var, values: Var, groups: &[usize], group_count: usize) -> Result<Var> {
        let (n, m) = self.dims2(weights)?;
        let (n2, d) = self.dims2(values)?;
        if n != n2 || groups.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "weighted_pool",
                left: vec![n, m],
                right: vec![n2, d],
            });
        }
        check_groups("weighted_pool", groups, group_count)?;
        let (w, x) = (self.value(weights), self.value(values));
        let mut data = vec![S::zero(); group_count * m * d];
        for (row, &g) in groups.iter().enumerate() {
            let xr = x.row(row);
            for (i, &wi) in w.row(row).iter().enumerate() {
                if wi == S::zero() {
                    continue;
                }
                let out = &mut data[(g * m + i) * d..(g * m + i + 1) * d];
                for (o, &xv) in out.iter_mut().zip(xr) {
                    *o += wi * xv;
                }
            }
        }
        self.push(
            "weighted_pool",
            Tensor::new(vec![group_count * m, d], data)?,
            Op::WeightedPool {
                weights,
                values,
                groups: groups.to_vec(),
            },
        )
    }

    /// Sums rows of `a[N×k]` by group, giving `[G×k]`.
    pub fn segment_sum(&mut self, a: Var, groups: &[usize], group_count: usize) -> Result<Var> {
        let (n, k) = self.dims2(a)?;
        if groups.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "segment_sum",
                left: vec![n, k],
                right: vec![groups.len()],
            });
        }
        check_groups("segment_sum", groups, group_count)?;
        let src = self.value(a);
        let mut data = vec![S::zero(); group_count * k];
        for (row, &g) in groups.iter().enumerate() {
            for (o, &v) in data[g * k..(g + 1) * k].iter_mut().zip(src.row(row)) {
                *o += v;
            }
        }
        self.push(
            "segment_sum",
            Tensor::new(vec![group_count, k], data)?,
            Op::SegmentSum {
                input: a,
                groups: groups.to_vec(),
            },
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        self.push("reshape", out, Op::Reshape(a))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().fold(S::zero(), |acc, &x| acc + x);
        self.push("sum", Tensor::scalar(total), Op::Sum(a))
    }

    /// Maximum of every column of `a[r×c]`, as `[c]`. Ties go to the first row.
    pub fn column_max(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let src = self.value(a);
        let mut argmax = vec![0usize; c];
        let mut best = src.row(0).to_vec();
        for i in 1..r {
            for (j, &v) in src.row(i).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = i;
                }
            }
        }
        self.push(
            "column_max",
            Tensor::new(vec![c], best)?,
            Op::ColumnMax { input: a, argmax },
        )
    }

    /// Picks elements at flat (row-major) positions, giving a `[k]` vector.
    pub fn select(&mut self, a: Var, flat_indices: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let mut data = Vec::with_capacity(flat_indices.len());
        for &ix in flat_indices {
            if ix >= src.len() {
                return Err(TensorError::IndexOutOfRange {
                    op: "select",
                    index: ix,
                    bound: src.len(),
                });
            }
            data.push(src.data()[ix]);
        }
        let out = Tensor::new(vec![flat_indices.len()], data)?;
        self.push(
            "select",
            out,
            Op::Select {
                input: a,
                indices: flat_indices.to_vec(),
            },
        )
    }

    /// Reverse pass from a scalar node. Contributions are accumulated in
    /// tape order, so results are deterministic.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    #[cfg(test)]
    fn sigmoid_grad_factor(&self) -> S {
        // Mutation hook: a doubled sigmoid derivative must be caught by grad_check.
        if self.corrupt_sigmoid {
            S::from_f64(2.0)
        } else {
            S::one()
        }
    }

    #[cfg(not(test))]
    #[inline]
    fn sigmoid_grad_factor(&self) -> S {
        S::one()
    }

    fn backprop_node(&self, idx: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (p, q) = self.value(*a).dims2().unwrap();
                let r = self.value(*b).shape()[1];
                let da = kernels::mm_bt(g, self.value(*b).data(), p, r, q);
                let db = kernels::mm_at(self.value(*a).data(), g, p, q, r);
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::MatMulBT(a, b) => {
                let (p, q) = self.value(*a).dims2().unwrap();
                let r = self.value(*b).shape()[0];
                let da = kernels::mm(g, self.value(*b).data(), p, r, q);
                let db = kernels::mm_at(g, self.value(*a).data(), p, r, q);
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g);
                accumulate(grads, *b, g);
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g);
                let neg: Vec<S> = g.iter().map(|&x| -x).collect();
                accumulate(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da: Vec<S> = g.iter().zip(vb).map(|(&gi, &y)| gi * y).collect();
                let db: Vec<S> = g.iter().zip(va).map(|(&gi, &x)| gi * x).collect();
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::AddBias(a, bias) => {
                accumulate(grads, *a, g);
                let n = self.value(*bias).len();
                let mut db = vec![S::zero(); n];
                for row in g.chunks(n) {
                    for (d, &x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                accumulate(grads, *bias, &db);
            }
            Op::Scale(a, k) => {
                let da: Vec<S> = g.iter().map(|&x| x * *k).collect();
                accumulate(grads, *a, &da);
            }
            Op::Relu(a) => {
                let da: Vec<S> = g
                    .iter()
                    .zip(out)
                    .map(|(&gi, &y)| if y > S::zero() { gi } else { S::zero() })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let k = self.sigmoid_grad_factor();
                let da: Vec<S> = g.iter().zip(out).map(|(&gi, &y)| k * gi * y * (S::one() - y)).collect();
                accumulate(grads, *a, &da);
            }
            Op::Tanh(a) => {
                let da: Vec<S> = g.iter().zip(out).map(|(&gi, &y)| gi * (S::one() - y * y)).collect();
                accumulate(grads, *a, &da);
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                let da: Vec<S> = g.iter().zip(x).map(|(&gi, &xi)| gi / xi).collect();
                accumulate(grads, *a, &da);
            }
            Op::ClampMin(a, floor) => {
                let x = self.value(*a).data();
                let da: Vec<S> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > *floor { gi } else { S::zero() })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::SoftmaxRows(a) => {
                let c = node.value.shape()[1];
                let mut da = vec![S::zero(); out.len()];
                for ((y, gr), d) in out.chunks(c).zip(g.chunks(c)).zip(da.chunks_mut(c)) {
                    let dot = y.iter().zip(gr).fold(S::zero(), |acc, (&yi, &gi)| acc + yi * gi);
                    for ((di, &yi), &gi) in d.iter_mut().zip(y).zip(gr) {
                        *di = yi * (gi - dot);
                    }
                }
                accumulate(grads, *a, &da);
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2().unwrap();
                let da = kernels::transpose(g, c, r);
                accumulate(grads, *a, &da);
            }
            Op::Embedding { table, indices, pad } => {
                let (_, d) = self.value(*table).dims2().unwrap();
                let dt = grads[table.0].get_or_insert_with(|| vec![S::zero(); self.value(*table).len()]);
                for (k, &ix) in indices.iter().enumerate() {
                    if Some(ix) == *pad {
                        continue;
                    }
                    for (t, &gv) in dt[ix * d..(ix + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                        *t += gv;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut dp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    accumulate(grads, p, &dp);
                    offset += w;
                }
            }
            Op::SliceCols { input, start } => {
                let (r, c) = self.value(*input).dims2().unwrap();
                let w = node.value.shape()[1];
                let dst = grads[input.0].get_or_insert_with(|| vec![S::zero(); r * c]);
                for i in 0..r {
                    for (d, &gv) in dst[i * c + start..i * c + start + w]
                        .iter_mut()
                        .zip(&g[i * w..(i + 1) * w])
                    {
                        *d += gv;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    accumulate(grads, p, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::RowScale(a, factors) => {
                let c = node.value.shape()[1];
                let mut da = g.to_vec();
                for (row, &f) in da.chunks_mut(c).zip(factors) {
                    row.iter_mut().for_each(|x| *x = *x * f);
                }
                accumulate(grads, *a, &da);
            }
            Op::WhereRows { mask, on, off } => {
                let c = node.value.shape()[1];
                let mut don = vec![S::zero(); g.len()];
                let mut doff = vec![S::zero(); g.len()];
                for (i, &m) in mask.iter().enumerate() {
                    let dst = if m { &mut don } else { &mut doff };
                    dst[i * c..(i + 1) * c].copy_from_slice(&g[i * c..(i + 1) * c]);
                }
                accumulate(grads, *on, &don);
                accumulate(grads, *off, &doff);
            }
            Op::WeightedPool {
                weights,
                values,
                groups,
            } => {
                let (w, x) = (self.value(*weights), self.value(*values));
                let (n, m) = w.dims2().unwrap();
                let d = x.shape()[1];
                let mut dw = vec![S::zero(); n * m];
                let mut dx = vec![S::zero(); n * d];
                for (row, &grp) in groups.iter().enumerate() {
                    let xr = x.row(row);
                    let wr = w.row(row);
                    for i in 0..m {
                        let gr = &g[(grp * m + i) * d..(grp * m + i + 1) * d];
                        dw[row * m + i] = gr.iter().zip(xr).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
                        let wi = wr[i];
                        if wi != S::zero() {
                            for (dv, &gv) in dx[row * d..(row + 1) * d].iter_mut().zip(gr) {
                                *dv += wi * gv;
                            }
                        }
                    }
                }
                accumulate(grads, *weights, &dw);
                accumulate(grads, *values, &dx);
            }
            Op::SegmentSum { input, groups } => {
                let k = node.value.shape()[1];
                let mut da = Vec::with_capacity(groups.len() * k);
                for &grp in groups {
                    da.extend_from_slice(&g[grp * k..(grp + 1) * k]);
                }
                accumulate(grads, *input, &da);
            }
            Op::Reshape(a) => accumulate(grads, *a, g),
            Op::Sum(a) => {
                let da = vec![g[0]; self.value(*a).len()];
                accumulate(grads, *a, &da);
            }
            Op::ColumnMax { input, argmax } => {
                let (r, c) = self.value(*input).dims2().unwrap();
                let dst = grads[input.0].get_or_insert_with(|| vec![S::zero(); r * c]);
                for (j, &i) in argmax.iter().enumerate() {
                    dst[i * c + j] += g[j];
                }
            }
            Op::Select { input, indices } => {
                let n = self.value(*input).len();
                let dst = grads[input.0].get_or_insert_with(|| vec![S::zero(); n]);
                for (&ix, &gv) in indices.iter().zip(g) {
                    dst[ix] += gv;
                }
            }
        }
    }
}

fn check_groups(op: &'static str, groups: &[usize], count: usize) -> Result<()> {
    match groups.iter().find(|&&g| g >= count) {
        Some(&g) => Err(TensorError::IndexOutOfRange {
            op,
            index: g,
            bound: count,
        }),
        None => Ok(()),
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, contribution: &[S]) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, &c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution.to_vec()),
    }
}

/// Result of [`Tape::backward`]: one gradient per recorded node.
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to `v`; nodes with no path to the loss get zeros.
    pub fn wrt(&self, v: Var) -> Tensor<S> {
        let shape = &self.shapes[v.0];
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// True when `v` lies on a path to the loss.
    pub fn reached(&self, v: Var) -> bool {
        self.grads.get(v.0).is_some_and(|g| g.is_some())
    }

    /// Moves the gradient for `v` out, leaving nothing behind.
    pub fn take(&mut self, v: Var) -> Tensor<S> {
        let shape = self.shapes[v.0].clone();
        match self.grads.get_mut(v.0).and_then(|g| g.take()) {
            Some(g) => Tensor::new(shape, g).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }
}
