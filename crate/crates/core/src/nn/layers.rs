//! Parameterized building blocks. Each layer owns a name prefix and
//! registers its tensors in a [`ModelParams`] under `<prefix>.<field>`.

use super::graph::{Graph, Var};
use super::params::ModelParams;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(msg()))
    }
}

fn key(prefix: &str, field: &str) -> String {
    format!("{prefix}.{field}")
}

/// `y = xW + b`
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(name: &str, input: usize, output: usize) -> Self {
        Dense {
            name: name.to_string(),
            input,
            output,
        }
    }

    pub fn register(&self, params: &mut ModelParams) {
        params.add_uniform(&key(&self.name, "w"), &[self.input, self.output], self.input, self.output);
        params.add_filled(&key(&self.name, "b"), &[self.output], 0.0);
    }

    pub fn forward(&self, g: &mut Graph, params: &ModelParams, x: Var) -> Result<Var> {
        let w = g.param(params, &key(&self.name, "w"));
        let b = g.param(params, &key(&self.name, "b"));
        dense(g, x, w, b)
    }
}

/// `xW + b` for explicit nodes.
pub fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xs, ws, bs) = (g.value(x).cols(), g.value(w).shape().to_vec(), g.value(b).len());
    check(ws.len() == 2 && ws[0] == xs && ws[1] == bs, || {
        format!("dense input width {xs}, weight {ws:?}, bias {bs}")
    })?;
    let y = g.matmul(x, w);
    Ok(g.add_row(y, b))
}

/// Row-wise layer normalization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            name: name.to_string(),
            dim,
        }
    }

    pub fn register(&self, params: &mut ModelParams) {
        params.add_filled(&key(&self.name, "gamma"), &[self.dim], 1.0);
        params.add_filled(&key(&self.name, "beta"), &[self.dim], 0.0);
    }

    pub fn forward(&self, g: &mut Graph, params: &ModelParams, x: Var) -> Result<Var> {
        check(g.value(x).cols() == self.dim, || {
            format!("layer norm width {} expected {}", g.value(x).cols(), self.dim)
        })?;
        let gamma = g.param(params, &key(&self.name, "gamma"));
        let beta = g.param(params, &key(&self.name, "beta"));
        let n = g.layer_norm_rows(x, LAYER_NORM_EPS);
        let s = g.mul_row(n, gamma);
        Ok(g.add_row(s, beta))
    }
}

/// `softmax(QKᵀ/√d_k)V` on a single group with one head.
pub fn scaled_dot_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var> {
    let (qs, ks, vs) = (g.value(q).shape().to_vec(), g.value(k).shape().to_vec(), g.value(v).shape().to_vec());
    check(
        qs.len() == 2 && ks.len() == 2 && vs.len() == 2 && qs[1] == ks[1] && ks[0] == vs[0] && vs[1] == qs[1],
        || format!("attention shapes Q {qs:?} K {ks:?} V {vs:?}"),
    )?;
    Ok(g.attention(q, k, v, 1, 1))
}

/// Multi-head self-attention with output projection.
#[derive(Debug, Clone)]
pub struct Mhsa {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
}

impl Mhsa {
    pub fn new(name: &str, dim: usize, heads: usize) -> Self {
        Mhsa {
            name: name.to_string(),
            dim,
            heads,
        }
    }

    pub fn register(&self, params: &mut ModelParams) {
        // The per-head projections are stored side by side as the column
        // blocks of one d×d matrix.
        for f in ["wq", "wk", "wv", "wo"] {
            params.add_uniform(&key(&self.name, f), &[self.dim, self.dim], self.dim, self.dim);
        }
    }

    /// Self-attention over `x`, whose rows form `groups` independent sets.
    pub fn forward(&self, g: &mut Graph, params: &ModelParams, x: Var, groups: usize) -> Result<Var> {
        let (n, d) = (g.value(x).rows(), g.value(x).cols());
        check(d == self.dim, || format!("attention width {d} expected {}", self.dim))?;
        check(self.heads > 0 && d % self.heads == 0, || {
            format!("width {d} not divisible by {} heads", self.heads)
        })?;
        check(groups > 0 && n % groups == 0, || format!("{n} rows not divisible into {groups} groups"))?;
        let wq = g.param(params, &key(&self.name, "wq"));
        let wk = g.param(params, &key(&self.name, "wk"));
        let wv = g.param(params, &key(&self.name, "wv"));
        let wo = g.param(params, &key(&self.name, "wo"));
        let q = g.matmul(x, wq);
        let k = g.matmul(x, wk);
        let v = g.matmul(x, wv);
        let heads = g.attention(q, k, v, self.heads, groups);
        Ok(g.matmul(heads, wo))
    }
}

/// `LayerNorm(x + sublayer)`
pub fn residual_layernorm(g: &mut Graph, params: &ModelParams, norm: &LayerNorm, x: Var, sub: Var) -> Result<Var> {
    check(g.value(x).shape() == g.value(sub).shape(), || {
        format!("residual shapes {:?} {:?}", g.value(x).shape(), g.value(sub).shape())
    })?;
    let s = g.add(x, sub);
    norm.forward(g, params, s)
}

/// Self-attention followed by a normalized residual connection.
#[derive(Debug, Clone)]
pub struct GlobalContext {
    pub attention: Mhsa,
    pub norm: LayerNorm,
}

impl GlobalContext {
    pub fn new(name: &str, dim: usize, heads: usize) -> Self {
        GlobalContext {
            attention: Mhsa::new(&key(name, "mhsa"), dim, heads),
            norm: LayerNorm::new(&key(name, "ln"), dim),
        }
    }

    pub fn register(&self, params: &mut ModelParams) {
        self.attention.register(params);
        self.norm.register(params);
    }

    pub fn forward(&self, g: &mut Graph, params: &ModelParams, x: Var, groups: usize) -> Result<Var> {
        let a = self.attention.forward(g, params, x, groups)?;
        residual_layernorm(g, params, &self.norm, x, a)
    }
}

/// Gated recurrent unit acting on a batch of rows.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        GruCell {
            name: name.to_string(),
            input,
            hidden,
        }
    }

    pub fn register(&self, params: &mut ModelParams) {
        for gate in ["z", "r", "h"] {
            params.add_uniform(&key(&self.name, &format!("w{gate}")), &[self.input, self.hidden], self.input, self.hidden);
            params.add_uniform(&key(&self.name, &format!("y{gate}")), &[self.hidden, self.hidden], self.hidden, self.hidden);
            params.add_filled(&key(&self.name, &format!("b{gate}")), &[self.hidden], 0.0);
        }
    }

    fn gate(&self, g: &mut Graph, params: &ModelParams, gate: &str, x: Var, h: Var) -> Var {
        let w = g.param(params, &key(&self.name, &format!("w{gate}")));
        let y = g.param(params, &key(&self.name, &format!("y{gate}")));
        let b = g.param(params, &key(&self.name, &format!("b{gate}")));
        let xw = g.matmul(x, w);
        let hy = g.matmul(h, y);
        let s = g.add(xw, hy);
        g.add_row(s, b)
    }

    /// `h_t = z ⊙ ĥ + (1 − z) ⊙ h_{t−1}`
    pub fn step(&self, g: &mut Graph, params: &ModelParams, x: Var, h: Var) -> Result<Var> {
        let (xr, xc) = (g.value(x).rows(), g.value(x).cols());
        let (hr, hc) = (g.value(h).rows(), g.value(h).cols());
        check(xc == self.input && hc == self.hidden && xr == hr, || {
            format!("gru input [{xr}×{xc}], hidden [{hr}×{hc}]")
        })?;
        let zs = self.gate(g, params, "z", x, h);
        let z = g.sigmoid(zs);
        let rs = self.gate(g, params, "r", x, h);
        let r = g.sigmoid(rs);
        let rh = g.mul(r, h);
        let cand = self.gate(g, params, "h", x, rh);
        let cand = g.tanh(cand);
        let diff = g.sub(cand, h);
        let step = g.mul(z, diff);
        Ok(g.add(h, step))
    }
}

/// Residual convolutional encoder from a `[T, N, N]` tensor to a vector.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub name: String,
    pub in_channels: usize,
    pub channels: usize,
    pub blocks: usize,
    pub output: usize,
}

impl ConvEncoder {
    pub fn new(name: &str, in_channels: usize, channels: usize, output: usize) -> Self {
        ConvEncoder {
            name: name.to_string(),
            in_channels,
            channels,
            blocks: 3,
            output,
        }
    }

    fn conv_names(&self) -> Vec<(String, usize)> {
        let mut v = vec![("stem".to_string(), self.in_channels)];
        for b in 0..self.blocks {
            v.push((format!("block{b}.conv1"), self.channels));
            v.push((format!("block{b}.conv2"), self.channels));
            if b + 1 < self.blocks {
                v.push((format!("down{b}"), self.channels));
            }
        }
        v
    }

    pub fn register(&self, params: &mut ModelParams) {
        let c = self.channels;
        for (conv, cin) in self.conv_names() {
            params.add_uniform(&key(&self.name, &format!("{conv}.w")), &[c, cin, 3, 3], cin * 9, c * 9);
            params.add_filled(&key(&self.name, &format!("{conv}.b")), &[c], 0.0);
        }
        Dense::new(&key(&self.name, "out"), c, self.output).register(params);
    }

    fn conv(&self, g: &mut Graph, params: &ModelParams, conv: &str, x: Var, stride: usize) -> Var {
        let w = g.param(params, &key(&self.name, &format!("{conv}.w")));
        let b = g.param(params, &key(&self.name, &format!("{conv}.b")));
        g.conv2d(x, w, b, stride)
    }

    pub fn forward(&self, g: &mut Graph, params: &ModelParams, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        check(shape.len() == 3 && shape[0] == self.in_channels && shape[1] >= 8 && shape[2] >= 8, || {
            format!("encoder input {shape:?}, expected [{}, N ≥ 8, N ≥ 8]", self.in_channels)
        })?;
        let mut h = self.conv(g, params, "stem", x, 1);
        for b in 0..self.blocks {
            let a = self.conv(g, params, &format!("block{b}.conv1"), h, 1);
            let a = g.layer_norm_rows(a, LAYER_NORM_EPS);
            let a = g.relu(a);
            let a = self.conv(g, params, &format!("block{b}.conv2"), a, 1);
            let s = g.add(h, a);
            h = g.relu(s);
            if b + 1 < self.blocks {
                h = self.conv(g, params, &format!("down{b}"), h, 2);
            }
        }
        let pooled = g.mean_cols(h);
        let row = g.reshape(pooled, &[1, self.channels]);
        let out = Dense::new(&key(&self.name, "out"), self.channels, self.output).forward(g, params, row)?;
        Ok(g.reshape(out, &[self.output]))
    }
}
