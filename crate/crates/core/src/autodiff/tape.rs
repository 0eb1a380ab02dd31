//! Wengert-list reverse-mode differentiation over 2-D `f64` matrices.
//!
//! Every operation appends a node holding its value and, when recording, the
//! information its backward rule needs. [`Tape::backward`] walks the nodes in
//! exact reverse order and accumulates gradients additively, so a value used
//! twice receives the sum of both contributions.
//!
//! Parameters are borrowed from a [`ParamStore`] rather than copied; the tape
//! lifetime is tied to that borrow, which keeps parameters immutable while any
//! forward pass is alive.

use std::borrow::Cow;
use std::collections::HashMap;

use super::param::{Gradients, ParamId, ParamStore};
use super::rng::Rng;
use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::TensorError;

const LAYER_NORM_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    GatherRows(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Relu(Var),
    Tanh(Var),
    Dropout(Var, Vec<f64>),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    NllProbs {
        probs: Var,
        targets: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, [f64]>,
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
}

/// Activation used inside feed-forward sublayers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

#[derive(Debug)]
pub struct Tape<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node<'p>>,
    param_vars: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<f64>>>,
    record: bool,
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::Shape {
        op,
        left: vec![a.0, a.1],
        right: vec![b.0, b.1],
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A recording tape with no parameter store (leaves only).
    pub fn new() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            grads: Vec::new(),
            record: true,
        }
    }

    /// A recording tape that can reference parameters from `store`.
    pub fn with_params(store: &'p ParamStore) -> Self {
        Tape {
            store: Some(store),
            ..Self::new()
        }
    }

    /// A tape that computes values only: nothing is recorded for backward.
    pub fn inference(store: &'p ParamStore) -> Self {
        Tape {
            store: Some(store),
            record: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    /// Number of operations recorded for the backward pass.
    pub fn recorded_ops(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Leaf | Op::Param))
            .count()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn value(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: vec![n.rows, n.cols],
            data: n.value.to_vec(),
        }
    }

    pub fn row(&self, v: Var, r: usize) -> &[f64] {
        let n = &self.nodes[v.0];
        &n.value[r * n.cols..(r + 1) * n.cols]
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let requires_grad = self.record && op_inputs(&op).iter().any(|&i| self.requires(i));
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Cow::Owned(value),
            rows,
            cols,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let (rows, cols) = t.matrix_dims();
        self.nodes.push(Node {
            value: Cow::Owned(t.data),
            rows,
            cols,
            op: Op::Leaf,
            requires_grad: requires_grad && self.record,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// The tape-side handle of a stored parameter; repeated calls return the
    /// same handle so gradients for shared weights land in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self
            .store
            .expect("Tape::param called on a tape without a parameter store");
        let p = store.get(id);
        let (rows, cols) = p.tensor.matrix_dims();
        self.nodes.push(Node {
            value: Cow::Borrowed(&p.tensor.data),
            rows,
            cols,
            op: Op::Param,
            requires_grad: self.record,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(self.data(a), self.data(b), &mut out, m, k, n);
        Ok(self.push(out, m, n, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul_nt", (m, k), (n, k2)));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(self.data(a), self.data(b), &mut out, m, k, n);
        Ok(self.push(out, m, n, Op::MatMulNt(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let src = self.data(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(out, n, m, Op::Transpose(a))
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let (m, n) = self.shape(a);
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(out, m, n, Op::Add(a, b)))
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if self.shape(row) != (1, n) {
            return Err(shape_err("add_row", (m, n), self.shape(row)));
        }
        let r = self.data(row);
        let out = self
            .data(x)
            .chunks(n.max(1))
            .flat_map(|xr| xr.iter().zip(r).map(|(a, b)| a + b))
            .collect();
        Ok(self.push(out, m, n, Op::AddRow(x, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let (m, n) = self.shape(a);
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(out, m, n, Op::Mul(a, b)))
    }

    /// Scales row `i` of an `m×n` matrix by `col[i]` (`col` is `m×1`).
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if self.shape(col) != (m, 1) {
            return Err(shape_err("mul_col", (m, n), self.shape(col)));
        }
        let c = self.data(col);
        let mut out = self.data(x).to_vec();
        for (i, row) in out.chunks_mut(n.max(1)).enumerate() {
            for v in row {
                *v *= c[i];
            }
        }
        Ok(self.push(out, m, n, Op::MulCol(x, col)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let (m, n) = self.shape(a);
        let out = self.data(a).iter().map(|x| x * factor).collect();
        self.push(out, m, n, Op::Scale(a, factor))
    }

    /// Row gather: `out[r] = src[indices[r]]`. Embedding lookup is a gather on
    /// the embedding table.
    pub fn gather_rows(&mut self, src: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.shape(src);
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= m {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: i,
                    extent: m,
                });
            }
            out.extend_from_slice(self.row(src, i));
        }
        Ok(self.push(out, indices.len(), n, Op::GatherRows(src, indices.to_vec())))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        self.gather_rows(table, ids)
    }

    // ---- normalisation and activations ----

    /// Row-wise layer normalisation with `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if self.shape(gain) != (1, n) || self.shape(bias) != (1, n) {
            return Err(shape_err("layer_norm", (m, n), self.shape(gain)));
        }
        let g = self.data(gain);
        let b = self.data(bias);
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for (i, row) in self.data(x).chunks(n).enumerate() {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        };
        Ok(self.push(out, m, n, op))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out = self
            .data(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
            .collect();
        self.push(out, m, n, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out = self.data(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(out, m, n, Op::Relu(a))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        match act {
            Activation::Gelu => self.gelu(a),
            Activation::Relu => self.relu(a),
        }
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out = self.data(a).iter().map(|x| x.tanh()).collect();
        self.push(out, m, n, Op::Tanh(a))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`. Identity when
    /// `rng` is `None` (eval mode) or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: Option<&mut Rng>) -> Var {
        let rng = match rng {
            Some(r) if p > 0.0 => r,
            _ => return a,
        };
        let (m, n) = self.shape(a);
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..m * n)
            .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let out = self
            .data(a)
            .iter()
            .zip(&mask)
            .map(|(x, k)| x * k)
            .collect();
        self.push(out, m, n, Op::Dropout(a, mask))
    }

    // ---- softmax and losses ----

    /// Row-wise softmax with max subtraction. With `allowed`, disallowed
    /// entries get exactly zero mass and the max is taken over allowed entries
    /// only; a row with nothing allowed is all zeros.
    pub fn softmax_rows(&mut self, x: Var, allowed: Option<&[bool]>) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if let Some(mask) = allowed {
            if mask.len() != m * n {
                return Err(TensorError::Shape {
                    op: "softmax_rows",
                    left: vec![m, n],
                    right: vec![mask.len()],
                });
            }
        }
        let src = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let ok = |j: usize| allowed.is_none_or(|mk| mk[i * n + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if ok(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if ok(j) {
                    let e = (v - max).exp();
                    out[i * n + j] = e;
                    total += e;
                }
            }
            for o in &mut out[i * n..(i + 1) * n] {
                *o /= total;
            }
        }
        Ok(self.push(out, m, n, Op::Softmax(x)))
    }

    /// Softmax along `axis` (0 = down columns, 1 = along rows).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        match axis {
            1 => self.softmax_rows(x, None),
            0 => {
                let t = self.transpose(x);
                let s = self.softmax_rows(t, None)?;
                Ok(self.transpose(s))
            }
            _ => Err(TensorError::Invalid {
                op: "softmax",
                msg: format!("axis {axis} invalid for a matrix"),
            }),
        }
    }

    /// Summed cross-entropy of row-wise logits against one target per row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.shape(logits);
        if targets.len() != m {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                left: vec![m, n],
                right: vec![targets.len()],
            });
        }
        let src = self.data(logits);
        let mut probs = vec![0.0; m * n];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: t,
                    extent: n,
                });
            }
            let row = &src[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + total.ln();
            loss += lse - row[t];
            for j in 0..n {
                probs[i * n + j] = (row[j] - lse).exp();
            }
        }
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(vec![loss], 1, 1, op))
    }

    /// Summed negative log of `probs[r, targets[r]]`.
    pub fn nll_probs(&mut self, probs: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.shape(probs);
        if targets.len() != m {
            return Err(TensorError::Shape {
                op: "nll_probs",
                left: vec![m, n],
                right: vec![targets.len()],
            });
        }
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(TensorError::Index {
                    op: "nll_probs",
                    index: t,
                    extent: n,
                });
            }
            loss -= self.data(probs)[i * n + t].ln();
        }
        let op = Op::NllProbs {
            probs,
            targets: targets.to_vec(),
        };
        Ok(self.push(vec![loss], 1, 1, op))
    }

    // ---- structure ----

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_rows",
            msg: "no inputs".into(),
        })?;
        let n = self.shape(*first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != n {
                return Err(shape_err("concat_rows", self.shape(*first), (r, c)));
            }
            rows += r;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(out, rows, n, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if start + len > m {
            return Err(TensorError::Index {
                op: "slice_rows",
                index: start + len,
                extent: m,
            });
        }
        let out = self.data(x)[start * n..(start + len) * n].to_vec();
        Ok(self.push(out, len, n, Op::SliceRows(x, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let m = self.shape(*first).0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != m {
                return Err(shape_err("concat_cols", self.shape(*first), (r, c)));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.row(p, i));
            }
        }
        Ok(self.push(out, m, total, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.shape(x);
        if start + len > n {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: start + len,
                extent: n,
            });
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        Ok(self.push(out, m, len, Op::SliceCols(x, start)))
    }

    /// Column means: `m×n -> 1×n`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let mut out = vec![0.0; n];
        for row in self.data(x).chunks(n.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        self.push(out, 1, n, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(vec![s], 1, 1, Op::Sum(x))
    }

    // ---- backward ----

    /// Reverse pass from a `1×1` output. Gradients from an earlier call are
    /// discarded.
    pub fn backward(&mut self, output: Var) -> Result<(), TensorError> {
        if self.shape(output) != (1, 1) {
            return Err(shape_err("backward", self.shape(output), (1, 1)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward output with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients collected for every parameter referenced on this tape.
    pub fn param_grads(&self) -> Gradients {
        let n = self.store.map_or(0, ParamStore::len);
        let mut out = Gradients::empty(n);
        let mut ids: Vec<_> = self.param_vars.iter().collect();
        ids.sort_by_key(|(id, _)| **id);
        for (&id, &v) in ids {
            if let Some(g) = self.grad(v) {
                out.set(id, g.to_vec());
            }
        }
        out
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let (m, n) = (node.rows, node.cols);
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let k = self.shape(*a).1;
                acc(*a, &mut |da| gemm_nt(g, self.data(*b), da, m, n, k));
                acc(*b, &mut |db| gemm_tn(self.data(*a), g, db, m, k, n));
            }
            Op::MatMulNt(a, b) => {
                let k = self.shape(*a).1;
                acc(*a, &mut |da| gemm_nn(g, self.data(*b), da, m, n, k));
                acc(*b, &mut |db| gemm_tn(g, self.data(*a), db, m, n, k));
            }
            Op::Transpose(a) => acc(*a, &mut |da| {
                // node is n×m view of an m'×n' input: input shape (n, m) here
                for r in 0..m {
                    for c in 0..n {
                        da[c * m + r] += g[r * n + c];
                    }
                }
            }),
            Op::Add(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| add_into(db, g));
            }
            Op::AddRow(x, row) => {
                acc(*x, &mut |dx| add_into(dx, g));
                acc(*row, &mut |dr| {
                    for gr in g.chunks(n.max(1)) {
                        add_into(dr, gr);
                    }
                });
            }
            Op::Mul(a, b) => {
                acc(*a, &mut |da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(self.data(*b)) {
                        *d += gv * bv;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(self.data(*a)) {
                        *d += gv * av;
                    }
                });
            }
            Op::MulCol(x, col) => {
                let c = self.data(*col);
                let xv = self.data(*x);
                acc(*x, &mut |dx| {
                    for r in 0..m {
                        for j in 0..n {
                            dx[r * n + j] += g[r * n + j] * c[r];
                        }
                    }
                });
                acc(*col, &mut |dc| {
                    for r in 0..m {
                        dc[r] += (0..n).map(|j| g[r * n + j] * xv[r * n + j]).sum::<f64>();
                    }
                });
            }
            Op::Scale(a, f) => acc(*a, &mut |da| {
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += gv * f;
                }
            }),
            Op::GatherRows(src, idx) => acc(*src, &mut |ds| {
                for (r, &s) in idx.iter().enumerate() {
                    add_into(&mut ds[s * n..(s + 1) * n], &g[r * n..(r + 1) * n]);
                }
            }),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.data(*gain);
                acc(*gain, &mut |dg| {
                    for r in 0..m {
                        for j in 0..n {
                            dg[j] += g[r * n + j] * xhat[r * n + j];
                        }
                    }
                });
                acc(*bias, &mut |db| {
                    for gr in g.chunks(n) {
                        add_into(db, gr);
                    }
                });
                acc(*x, &mut |dx| {
                    let nf = n as f64;
                    for r in 0..m {
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for j in 0..n {
                            let d = g[r * n + j] * gv[j];
                            sum_d += d;
                            sum_dx += d * xhat[r * n + j];
                        }
                        for j in 0..n {
                            let d = g[r * n + j] * gv[j];
                            dx[r * n + j] +=
                                inv_std[r] / nf * (nf * d - sum_d - xhat[r * n + j] * sum_dx);
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let xv = self.data(*a);
                acc(*a, &mut |da| {
                    for ((d, gv), &x) in da.iter_mut().zip(g).zip(xv) {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        *d += gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
                    }
                });
            }
            Op::Relu(a) => {
                let xv = self.data(*a);
                acc(*a, &mut |da| {
                    for ((d, gv), &x) in da.iter_mut().zip(g).zip(xv) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(*a, &mut |da| {
                    for ((d, gv), yv) in da.iter_mut().zip(g).zip(y.iter()) {
                        *d += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Dropout(a, mask) => acc(*a, &mut |da| {
                for ((d, gv), k) in da.iter_mut().zip(g).zip(mask) {
                    *d += gv * k;
                }
            }),
            Op::Softmax(a) => {
                let y = &node.value;
                acc(*a, &mut |da| {
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            da[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let cols = self.shape(*logits).1;
                acc(*logits, &mut |dl| {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..cols {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            dl[r * cols + j] += g[0] * (probs[r * cols + j] - onehot);
                        }
                    }
                });
            }
            Op::NllProbs { probs, targets } => {
                let cols = self.shape(*probs).1;
                let pv = self.data(*probs);
                acc(*probs, &mut |dp| {
                    for (r, &t) in targets.iter().enumerate() {
                        dp[r * cols + t] -= g[0] / pv[r * cols + t];
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(p, &mut |dp| add_into(dp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceRows(x, start) => acc(*x, &mut |dx| {
                add_into(&mut dx[start * n..(start + m) * n], g);
            }),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    acc(p, &mut |dp| {
                        for r in 0..m {
                            add_into(
                                &mut dp[r * c..(r + 1) * c],
                                &g[r * n + offset..r * n + offset + c],
                            );
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceCols(x, start) => {
                let src_cols = self.shape(*x).1;
                acc(*x, &mut |dx| {
                    for r in 0..m {
                        add_into(
                            &mut dx[r * src_cols + start..r * src_cols + start + n],
                            &g[r * n..(r + 1) * n],
                        );
                    }
                });
            }
            Op::MeanRows(x) => {
                let rows = self.shape(*x).0;
                acc(*x, &mut |dx| {
                    for dr in dx.chunks_mut(n.max(1)) {
                        for (d, gv) in dr.iter_mut().zip(g) {
                            *d += gv / rows as f64;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |dx| {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Param => vec![],
        Op::MatMul(a, b) | Op::MatMulNt(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::AddRow(a, b) | Op::MulCol(a, b) => vec![*a, *b],
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::GatherRows(a, _)
        | Op::Gelu(a)
        | Op::Relu(a)
        | Op::Tanh(a)
        | Op::Dropout(a, _)
        | Op::Softmax(a)
        | Op::SliceRows(a, _)
        | Op::SliceCols(a, _)
        | Op::MeanRows(a)
        | Op::Sum(a) => vec![*a],
        Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
        Op::CrossEntropy { logits, .. } => vec![*logits],
        Op::NllProbs { probs, .. } => vec![*probs],
        Op::ConcatRows(p) | Op::ConcatCols(p) => p.clone(),
    }
}
