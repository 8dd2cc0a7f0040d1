//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation in execution order, so the node
//! list is already a topological order and the backward pass is a single
//! reverse sweep that visits each node once.

use std::collections::BTreeMap;

use super::params::ModelParams;
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, index: Vec<usize> },
    PairwiseDist(Var, Var),
    StraightThrough(Var),
    Attention { q: Var, k: Var, v: Var, heads: usize, groups: usize, probs: Vec<f64> },
    Conv2d { x: Var, w: Var, b: Var, stride: usize },
    MeanCols(Var),
    Mean(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Computation trace plus the values of every intermediate.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: BTreeMap<String, Var>,
}

const DIST_EPS: f64 = 1e-12;

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let len = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.data().iter().all(|v| !v.is_nan()), "NaN produced by {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf whose gradient can be read after [`backward`](Self::backward).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Leaf for a named parameter. Repeated calls return the same node so
    /// gradients of shared weights accumulate in one place.
    pub fn param(&mut self, params: &ModelParams, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let t = params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .clone();
        let v = self.push(t, Op::Leaf);
        self.params.insert(name.to_string(), v);
        v
    }

    /// Makes `name` resolve to an existing node in later
    /// [`param`](Self::param) calls.
    pub fn bind_param(&mut self, name: &str, v: Var) {
        self.params.insert(name.to_string(), v);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions {k} and {k2}");
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.len(), tb.len(), "elementwise shapes {:?} {:?}", ta.shape(), tb.shape());
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(&shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `x[m×n] + b[n]` with `b` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (m, n) = self.shape(x);
        assert_eq!(self.value(b).len(), n, "row broadcast width");
        let bv = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for i in 0..m {
            for (o, bj) in out[i * n..(i + 1) * n].iter_mut().zip(&bv) {
                *o += bj;
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::AddRow(x, b))
    }

    /// `x[m×n] ⊙ g[n]` with `g` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Var {
        let (m, n) = self.shape(x);
        assert_eq!(self.value(g).len(), n, "row broadcast width");
        let gv = self.value(g).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for i in 0..m {
            for (o, gj) in out[i * n..(i + 1) * n].iter_mut().zip(&gv) {
                *o *= gj;
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::MulRow(x, g))
    }

    /// `scale · x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| scale * v + shift).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(&shape, data), Op::Affine(x, scale))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(&shape, data), op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let mut out = self.value(x).data().to_vec();
        for i in 0..m {
            softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::SoftmaxRows(x))
    }

    /// Per-row standardization `(x − mean) / sqrt(var + eps)`, no affine.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let (m, n) = self.shape(x);
        let mut out = self.value(x).data().to_vec();
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::LayerNormRows { x, inv_std })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, m, "concat_cols row counts");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                out[i * total + offset..i * total + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        self.push(Tensor::matrix(m, total, out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.shape(x);
        assert!(start + len <= n, "slice_cols range");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        self.push(Tensor::matrix(m, len, out), Op::SliceCols { x, start })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let n = self.shape(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, n, "concat_rows widths");
            out.extend_from_slice(self.value(p).data());
            rows += r;
        }
        self.push(Tensor::matrix(rows, n, out), Op::ConcatRows(parts.to_vec()))
    }

    /// Output row `i` is input row `index[i]`; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Var {
        let (m, n) = self.shape(x);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &r in index {
            assert!(r < m, "gather row {r} of {m}");
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        self.push(
            Tensor::matrix(index.len(), n, out),
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let index: Vec<usize> = (start..start + len).collect();
        self.gather_rows(x, &index)
    }

    /// Euclidean distance between every row of `a` and every row of `b`.
    pub fn pairwise_dist(&mut self, a: Var, b: Var) -> Var {
        let (n, d) = self.shape(a);
        let (m, d2) = self.shape(b);
        assert_eq!(d, d2, "pairwise_dist widths");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ai = &av[i * d..(i + 1) * d];
            for j in 0..m {
                let bj = &bv[j * d..(j + 1) * d];
                let s: f64 = ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum();
                out[i * m + j] = (s + DIST_EPS).sqrt();
            }
        }
        self.push(Tensor::matrix(n, m, out), Op::PairwiseDist(a, b))
    }

    /// Forward value `hard`, backward treated as the identity onto `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor) -> Var {
        assert_eq!(self.value(soft).len(), hard.len(), "straight-through shapes");
        self.push(hard, Op::StraightThrough(soft))
    }

    /// Multi-head scaled dot-product attention. Rows of `q` and of `k`/`v`
    /// are split into `groups` consecutive blocks that attend only within
    /// the matching block; columns are split into `heads` slices of width
    /// `d / heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, groups: usize) -> Var {
        let (nq, d) = self.shape(q);
        let (nk, dk) = self.shape(k);
        let (nv, dv) = self.shape(v);
        assert!(nk == nv, "attention key/value row counts");
        assert!(dk == d && dv == d, "attention widths");
        assert!(heads > 0 && d % heads == 0, "width {d} not divisible by {heads} heads");
        assert!(groups > 0 && nq % groups == 0 && nk % groups == 0, "rows not divisible into {groups} groups");
        let (gq, gk) = (nq / groups, nk / groups);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![0.0; groups * heads * gq * gk];
        let mut out = vec![0.0; nq * d];
        for gi in 0..groups {
            for h in 0..heads {
                let p = &mut probs[(gi * heads + h) * gq * gk..][..gq * gk];
                for i in 0..gq {
                    let qi = &qv[(gi * gq + i) * d + h * dh..][..dh];
                    let row = &mut p[i * gk..(i + 1) * gk];
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &kv[(gi * gk + j) * d + h * dh..][..dh];
                        *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    softmax_in_place(row);
                    let oi = &mut out[(gi * gq + i) * d + h * dh..][..dh];
                    for (j, &pij) in row.iter().enumerate() {
                        let vj = &vv[(gi * gk + j) * d + h * dh..][..dh];
                        for (o, x) in oi.iter_mut().zip(vj) {
                            *o += pij * x;
                        }
                    }
                }
            }
        }
        self.push(
            Tensor::matrix(nq, d, out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                groups,
                probs,
            },
        )
    }

    /// 3×3 convolution with zero padding 1. `x` is `[C, H, W]`, `w` is
    /// `[O, C, 3, 3]`, `b` is `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 3, "conv input must be [C, H, W]");
        assert!(ws.len() == 4 && ws[1] == xs[0] && ws[2] == 3 && ws[3] == 3, "conv weight shape {ws:?}");
        let (c_in, h, wd) = (xs[0], xs[1], xs[2]);
        let c_out = ws[0];
        let (ho, wo) = conv_out(h, wd, stride);
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        assert_eq!(bv.len(), c_out);
        let mut out = vec![0.0; c_out * ho * wo];
        for o in 0..c_out {
            out[o * ho * wo..(o + 1) * ho * wo].iter_mut().for_each(|v| *v = bv[o]);
            for c in 0..c_in {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wgt = wv[((o * c_in + c) * 3 + ky) * 3 + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xv[(c * h + iy as usize) * wd..][..wd];
                            let orow = &mut out[(o * ho + oy) * wo..][..wo];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix >= 0 && (ix as usize) < wd {
                                    *ov += wgt * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(&[c_out, ho, wo], out), Op::Conv2d { x, w, b, stride })
    }

    /// Mean of each row: `[m × n] → [m]`. Global average pooling when
    /// applied to a `[C, H, W]` feature map.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let src = self.value(x).data();
        let out = (0..m).map(|i| src[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
        self.push(Tensor::new(&[m], out), Op::MeanCols(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    /// Mean softmax cross-entropy of `[B × C]` logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (b, c) = self.shape(logits);
        assert_eq!(labels.len(), b, "one label per row");
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for i in 0..b {
            let row = &mut probs[i * c..(i + 1) * c];
            softmax_in_place(row);
            loss -= row[labels[i]].max(1e-300).ln();
        }
        self.push(
            Tensor::scalar(loss / b as f64),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(shape);
        self.push(t, Op::Reshape(x))
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter leaf created through
    /// [`param`](Self::param), keyed by parameter name.
    pub fn param_grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.params
            .iter()
            .map(|(name, &v)| {
                let g = self
                    .grad(v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; self.value(v).len()]);
                (name.clone(), g)
            })
            .collect()
    }

    /// Backpropagates from `loss` (any shape; seeded with ones).
    pub fn backward(&mut self, loss: Var) {
        self.backward_with(loss, None);
    }

    /// Backpropagates with an explicit upstream gradient for `output`.
    pub fn backward_with(&mut self, output: Var, seed: Option<Vec<f64>>) {
        let len = self.value(output).len();
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[output.0] = Some(seed.unwrap_or_else(|| vec![1.0; len]));
        for idx in (0..=output.0).rev() {
            let Some(gy) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &gy);
            self.grads[idx] = Some(gy);
        }
    }

    fn propagate(&mut self, idx: usize, gy: &[f64]) {
        // Split borrows: the op is read while gradients of earlier nodes
        // are written.
        let (before, rest) = self.nodes.split_at(idx);
        let node = &rest[0];
        let grads = &mut self.grads;
        let val = |v: Var| -> &Tensor { &before[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let (ad, bd) = (ta.data().to_vec(), tb.data().to_vec());
                matmul_bt_acc(gy, &bd, acc(grads, before, *a), m, n, k);
                matmul_at_acc(&ad, gy, acc(grads, before, *b), m, k, n);
            }
            Op::Add(a, b) => {
                for (d, g) in acc(grads, before, *a).iter_mut().zip(gy) {
                    *d += g;
                }
                for (d, g) in acc(grads, before, *b).iter_mut().zip(gy) {
                    *d += g;
                }
            }
            Op::Sub(a, b) => {
                for (d, g) in acc(grads, before, *a).iter_mut().zip(gy) {
                    *d += g;
                }
                for (d, g) in acc(grads, before, *b).iter_mut().zip(gy) {
                    *d -= g;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data().to_vec(), val(*b).data().to_vec());
                for ((d, g), y) in acc(grads, before, *a).iter_mut().zip(gy).zip(&bv) {
                    *d += g * y;
                }
                for ((d, g), x) in acc(grads, before, *b).iter_mut().zip(gy).zip(&av) {
                    *d += g * x;
                }
            }
            Op::AddRow(x, b) => {
                let n = val(*b).len();
                for (d, g) in acc(grads, before, *x).iter_mut().zip(gy) {
                    *d += g;
                }
                let db = acc(grads, before, *b);
                for (i, g) in gy.iter().enumerate() {
                    db[i % n] += g;
                }
            }
            Op::MulRow(x, gm) => {
                let n = val(*gm).len();
                let xv = val(*x).data().to_vec();
                let gv = val(*gm).data().to_vec();
                {
                    let dx = acc(grads, before, *x);
                    for (i, g) in gy.iter().enumerate() {
                        dx[i] += g * gv[i % n];
                    }
                }
                let dg = acc(grads, before, *gm);
                for (i, g) in gy.iter().enumerate() {
                    dg[i % n] += g * xv[i];
                }
            }
            Op::Affine(x, scale) => {
                for (d, g) in acc(grads, before, *x).iter_mut().zip(gy) {
                    *d += g * scale;
                }
            }
            Op::Relu(x) => {
                let xv = val(*x).data().to_vec();
                for ((d, g), v) in acc(grads, before, *x).iter_mut().zip(gy).zip(&xv) {
                    if *v > 0.0 {
                        *d += g;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                for ((d, g), s) in acc(grads, before, *x).iter_mut().zip(gy).zip(y) {
                    *d += g * s * (1.0 - s);
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                for ((d, g), t) in acc(grads, before, *x).iter_mut().zip(gy).zip(y) {
                    *d += g * (1.0 - t * t);
                }
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                let dx = acc(grads, before, *x);
                for i in 0..node.value.rows() {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &gy[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNormRows { x, inv_std } => {
                let y = node.value.data();
                let n = node.value.cols();
                let dx = acc(grads, before, *x);
                for (i, inv) in inv_std.iter().enumerate() {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &gy[i * n..(i + 1) * n];
                    let mg = gr.iter().sum::<f64>() / n as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        dx[i * n + j] += inv * (gr[j] - mg - yr[j] * mgy);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let dp = acc(grads, before, p);
                    for i in 0..m {
                        for j in 0..w {
                            dp[i * w + j] += gy[i * total + offset + j];
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let n = val(*x).cols();
                let len = node.value.cols();
                let dx = acc(grads, before, *x);
                for i in 0..node.value.rows() {
                    for j in 0..len {
                        dx[i * n + start + j] += gy[i * len + j];
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    let dp = acc(grads, before, p);
                    for (d, g) in dp.iter_mut().zip(&gy[offset..offset + len]) {
                        *d += g;
                    }
                    offset += len;
                }
            }
            Op::GatherRows { x, index } => {
                let n = node.value.cols();
                let dx = acc(grads, before, *x);
                for (i, &r) in index.iter().enumerate() {
                    for j in 0..n {
                        dx[r * n + j] += gy[i * n + j];
                    }
                }
            }
            Op::PairwiseDist(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, d, m) = (ta.rows(), ta.cols(), tb.rows());
                let (av, bv) = (ta.data().to_vec(), tb.data().to_vec());
                let dist = node.value.data();
                let mut da = vec![0.0; n * d];
                let mut db = vec![0.0; m * d];
                for i in 0..n {
                    for j in 0..m {
                        let g = gy[i * m + j] / dist[i * m + j];
                        if g == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = av[i * d + k] - bv[j * d + k];
                            da[i * d + k] += g * diff;
                            db[j * d + k] -= g * diff;
                        }
                    }
                }
                for (dst, s) in acc(grads, before, *a).iter_mut().zip(&da) {
                    *dst += s;
                }
                for (dst, s) in acc(grads, before, *b).iter_mut().zip(&db) {
                    *dst += s;
                }
            }
            Op::StraightThrough(soft) => {
                for (d, g) in acc(grads, before, *soft).iter_mut().zip(gy) {
                    *d += g;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                groups,
                probs,
            } => {
                let (heads, groups) = (*heads, *groups);
                let (tq, tk) = (val(*q), val(*k));
                let (nq, d, nk) = (tq.rows(), tq.cols(), tk.rows());
                let (gq, gk) = (nq / groups, nk / groups);
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let qv = tq.data().to_vec();
                let kv = tk.data().to_vec();
                let vv = val(*v).data().to_vec();
                let mut dq = vec![0.0; nq * d];
                let mut dk = vec![0.0; nk * d];
                let mut dv = vec![0.0; nk * d];
                let mut dp = vec![0.0; gk];
                for gi in 0..groups {
                    for h in 0..heads {
                        let p = &probs[(gi * heads + h) * gq * gk..][..gq * gk];
                        for i in 0..gq {
                            let ri = (gi * gq + i) * d + h * dh;
                            let go = &gy[ri..ri + dh];
                            let prow = &p[i * gk..(i + 1) * gk];
                            for j in 0..gk {
                                let rj = (gi * gk + j) * d + h * dh;
                                dp[j] = go.iter().zip(&vv[rj..rj + dh]).map(|(a, b)| a * b).sum();
                                for t in 0..dh {
                                    dv[rj + t] += prow[j] * go[t];
                                }
                            }
                            let dot: f64 = prow.iter().zip(&dp).map(|(a, b)| a * b).sum();
                            for j in 0..gk {
                                let ds = prow[j] * (dp[j] - dot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                let rj = (gi * gk + j) * d + h * dh;
                                for t in 0..dh {
                                    dq[ri + t] += ds * kv[rj + t];
                                    dk[rj + t] += ds * qv[ri + t];
                                }
                            }
                        }
                    }
                }
                for (dst, s) in acc(grads, before, *q).iter_mut().zip(&dq) {
                    *dst += s;
                }
                for (dst, s) in acc(grads, before, *k).iter_mut().zip(&dk) {
                    *dst += s;
                }
                for (dst, s) in acc(grads, before, *v).iter_mut().zip(&dv) {
                    *dst += s;
                }
            }
            Op::Conv2d { x, w, b, stride } => {
                let stride = *stride;
                let xs = val(*x).shape().to_vec();
                let (c_in, h, wd) = (xs[0], xs[1], xs[2]);
                let c_out = val(*w).shape()[0];
                let (ho, wo) = conv_out(h, wd, stride);
                let xv = val(*x).data().to_vec();
                let wv = val(*w).data().to_vec();
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; c_out];
                for o in 0..c_out {
                    db[o] = gy[o * ho * wo..(o + 1) * ho * wo].iter().sum();
                    for c in 0..c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let wi = ((o * c_in + c) * 3 + ky) * 3 + kx;
                                let wgt = wv[wi];
                                let mut gw = 0.0;
                                for oy in 0..ho {
                                    let iy = (oy * stride + ky) as isize - 1;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let base = (c * h + iy as usize) * wd;
                                    let grow = &gy[(o * ho + oy) * wo..][..wo];
                                    for (ox, &g) in grow.iter().enumerate() {
                                        let ix = (ox * stride + kx) as isize - 1;
                                        if ix >= 0 && (ix as usize) < wd {
                                            let xi = base + ix as usize;
                                            gw += g * xv[xi];
                                            dx[xi] += g * wgt;
                                        }
                                    }
                                }
                                dw[wi] += gw;
                            }
                        }
                    }
                }
                for (dst, s) in acc(grads, before, *x).iter_mut().zip(&dx) {
                    *dst += s;
                }
                for (dst, s) in acc(grads, before, *w).iter_mut().zip(&dw) {
                    *dst += s;
                }
                for (dst, s) in acc(grads, before, *b).iter_mut().zip(&db) {
                    *dst += s;
                }
            }
            Op::MeanCols(x) => {
                let n = val(*x).cols();
                let dx = acc(grads, before, *x);
                for (i, d) in dx.iter_mut().enumerate() {
                    *d += gy[i / n] / n as f64;
                }
            }
            Op::Mean(x) => {
                let len = val(*x).len();
                let g = gy[0] / len as f64;
                acc(grads, before, *x).iter_mut().for_each(|d| *d += g);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = val(*logits).cols();
                let b = labels.len();
                let scale = gy[0] / b as f64;
                let dl = acc(grads, before, *logits);
                for i in 0..b {
                    for j in 0..c {
                        let target = if j == labels[i] { 1.0 } else { 0.0 };
                        dl[i * c + j] += scale * (probs[i * c + j] - target);
                    }
                }
            }
            Op::Reshape(x) => {
                for (d, g) in acc(grads, before, *x).iter_mut().zip(gy) {
                    *d += g;
                }
            }
        }
    }
}

pub(crate) fn conv_out(h: usize, w: usize, stride: usize) -> (usize, usize) {
    ((h - 1) / stride + 1, (w - 1) / stride + 1)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
