//! Tape-based reverse-mode differentiation over 2D float64 tensors.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] walks the tape in reverse and accumulates
//! vector-Jacobian products. Shape mismatches are programming errors and
//! panic; recoverable conditions (an all-masked softmax row) return
//! [`TensorError`].

use super::{ParamGrads, ParamId, ParamStore, Tensor, TensorError};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MaskedSoftmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    GatherRows {
        table: Var,
        idx: Vec<usize>,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    SumAll(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Computation tape borrowing a parameter store for the duration of one
/// forward/backward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is propagated into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf input whose gradient is recorded by [`Graph::backward`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols(), tb.rows(), "matmul inner dimension mismatch");
        let out = matmul_raw(ta.data(), tb.data(), ta.rows(), ta.cols(), tb.cols());
        let t = Tensor::matrix(ta.rows(), tb.cols(), out);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = Tensor::matrix(ta.cols(), ta.rows(), transpose_raw(ta.data(), ta.rows(), ta.cols()));
        let rg = self.rg(a);
        self.push(t, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Add(a, b), rg)
    }

    /// Broadcast-adds a `[1, c]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row expects a single row");
        assert_eq!(ta.cols(), tr.cols(), "add_row width mismatch");
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tr.data()[i % c])
            .collect();
        let t = Tensor::matrix(ta.rows(), c, data);
        let rg = self.rg(a) || self.rg(row);
        self.push(t, Op::AddRow(a, row), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * k).collect());
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, k), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x.exp()).collect());
        let rg = self.rg(a);
        self.push(t, Op::Exp(a), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(t, Op::Gelu(a), rg)
    }

    /// Row-wise layer normalization with learned `[1, c]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (r, c) = (tx.rows(), tx.cols());
        assert_eq!(tg.cols(), c, "layer_norm gain width");
        assert_eq!(tb.cols(), c, "layer_norm bias width");
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = tx.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                out[i * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let t = Tensor::matrix(r, c, out);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Row-wise softmax. `mask[i * cols + j] == false` excludes entry `j` of
    /// row `i`: it receives a `-inf` logit and an exact zero probability.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (r, c) = (tx.rows(), tx.cols());
        if let Some(m) = mask {
            assert_eq!(m.len(), r * c, "mask shape mismatch");
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = tx.row_slice(i);
            let keep = |j: usize| mask.is_none_or(|m| m[i * c + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::DegenerateAttention { row: i });
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    let e = (v - max).exp();
                    out[i * c + j] = e;
                    sum += e;
                }
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= sum;
            }
        }
        let t = Tensor::matrix(r, c, out);
        let rg = self.rg(x);
        Ok(self.push(t, Op::MaskedSoftmax(x), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let r = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = self.value(p);
                assert_eq!(t.rows(), r, "concat_cols row mismatch");
                t.cols()
            })
            .collect();
        let c: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(r, c, out), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        assert!(start + len <= tx.cols(), "slice_cols out of range");
        let r = tx.rows();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&tx.row_slice(i)[start..start + len]);
        }
        let rg = self.rg(x);
        self.push(Tensor::matrix(r, len, out), Op::SliceCols { x, start }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let c = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut r = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), c, "concat_rows column mismatch");
            out.extend_from_slice(t.data());
            r += t.rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(r, c, out), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        // Expressed through a gather so there is a single backward path.
        let idx: Vec<usize> = (start..start + len).collect();
        self.gather_rows(x, &idx)
    }

    /// Row lookup: output row `i` is `table[idx[i]]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let tt = self.value(table);
        let c = tt.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < tt.rows(), "gather index {i} out of range");
            out.extend_from_slice(tt.row_slice(i));
        }
        let rg = self.rg(table);
        self.push(
            Tensor::matrix(idx.len(), c, out),
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            rg,
        )
    }

    /// Mean softmax cross-entropy of `[n, C]` logits against class indices.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Var {
        let tl = self.value(logits);
        let (n, c) = (tl.rows(), tl.cols());
        assert_eq!(labels.len(), n, "one label per row");
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for i in 0..n {
            let row = tl.row_slice(i);
            assert!(labels[i] < c, "label out of range");
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - row[labels[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss / n as f64),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward requires a scalar root");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(&node.op, Var(i), &g, &mut grads);
        }
        Grads { grads }
    }

    fn propagate(&self, op: &Op, out: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, contrib: &[f64]| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (a, b) in existing.iter_mut().zip(contrib) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(contrib.to_vec()),
            }
        };
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    let bt = transpose_raw(tb.data(), k, c);
                    acc(*a, &matmul_raw(g, &bt, r, c, k));
                }
                if self.rg(*b) {
                    let at = transpose_raw(ta.data(), r, k);
                    acc(*b, &matmul_raw(&at, g, k, r, c));
                }
            }
            Op::Transpose(a) => {
                let to = self.value(out);
                acc(*a, &transpose_raw(g, to.rows(), to.cols()));
            }
            Op::Add(a, b) => {
                acc(*a, g);
                acc(*b, g);
            }
            Op::AddRow(a, row) => {
                acc(*a, g);
                let c = self.value(*row).cols();
                let mut gr = vec![0.0; c];
                for (i, v) in g.iter().enumerate() {
                    gr[i % c] += v;
                }
                acc(*row, &gr);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga: Vec<f64> = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(*a, &ga);
                acc(*b, &gb);
            }
            Op::Scale(a, k) => {
                let ga: Vec<f64> = g.iter().map(|x| x * k).collect();
                acc(*a, &ga);
            }
            Op::Exp(a) => {
                let to = self.value(out);
                let ga: Vec<f64> = g.iter().zip(to.data()).map(|(x, y)| x * y).collect();
                acc(*a, &ga);
            }
            Op::Gelu(a) => {
                let ta = self.value(*a);
                let ga: Vec<f64> = g
                    .iter()
                    .zip(ta.data())
                    .map(|(gv, &x)| {
                        let u = GELU_C * (x + GELU_A * x * x * x);
                        let th = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gv * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)
                    })
                    .collect();
                acc(*a, &ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gain);
                let c = tg.cols();
                let r = g.len() / c;
                let mut ggain = vec![0.0; c];
                let mut gbias = vec![0.0; c];
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    let gi = &g[i * c..(i + 1) * c];
                    let hi = &xhat[i * c..(i + 1) * c];
                    let mut mean_d = 0.0;
                    let mut mean_dh = 0.0;
                    for j in 0..c {
                        ggain[j] += gi[j] * hi[j];
                        gbias[j] += gi[j];
                        let d = gi[j] * tg.data()[j];
                        mean_d += d;
                        mean_dh += d * hi[j];
                    }
                    mean_d /= c as f64;
                    mean_dh /= c as f64;
                    for j in 0..c {
                        let d = gi[j] * tg.data()[j];
                        gx[i * c + j] = inv_std[i] * (d - mean_d - hi[j] * mean_dh);
                    }
                }
                acc(*x, &gx);
                acc(*gain, &ggain);
                acc(*bias, &gbias);
            }
            Op::MaskedSoftmax(x) => {
                let ty = self.value(out);
                let c = ty.cols();
                let mut gx = vec![0.0; g.len()];
                for i in 0..ty.rows() {
                    let y = ty.row_slice(i);
                    let gi = &g[i * c..(i + 1) * c];
                    let dot: f64 = y.iter().zip(gi).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        gx[i * c + j] = y[j] * (gi[j] - dot);
                    }
                }
                acc(*x, &gx);
            }
            Op::ConcatCols(parts) => {
                let total = self.value(out).cols();
                let r = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut gp = Vec::with_capacity(r * w);
                    for i in 0..r {
                        gp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    acc(p, &gp);
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let (r, c) = (tx.rows(), tx.cols());
                let w = self.value(out).cols();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    gx[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                acc(*x, &gx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    acc(p, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::GatherRows { table, idx } => {
                let tt = self.value(*table);
                let c = tt.cols();
                let mut gt = vec![0.0; tt.len()];
                for (row, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        gt[i * c + j] += g[row * c + j];
                    }
                }
                acc(*table, &gt);
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let c = probs.len() / n;
                let scale = g[0] / n as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gl[i * c + l] -= scale;
                }
                acc(*logits, &gl);
            }
            Op::SumAll(x) => {
                let n = self.value(*x).len();
                acc(*x, &vec![g[0]; n]);
            }
        }
    }
}

/// Result of a reverse pass.
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient accumulated at a leaf (`input` or `param`) node.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Collects parameter gradients into store order; unused parameters get zeros.
    pub fn param_grads(&self, graph: &Graph<'_>) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(graph.params);
        self.accumulate_into(graph, &mut out);
        out
    }

    pub fn accumulate_into(&self, graph: &Graph<'_>, out: &mut ParamGrads) {
        for (pid, slot) in graph.param_vars.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = &self.grads[v.0] {
                    out.accumulate(ParamId(pid), g);
                }
            }
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * c..(p + 1) * c];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
