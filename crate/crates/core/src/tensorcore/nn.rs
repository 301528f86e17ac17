//! Layers built on [`Graph`]: linear maps, layer norm, multi-head attention,
//! and pre-norm transformer blocks.

use rand::Rng;

use super::{Graph, ParamId, ParamStore, TensorError, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.xavier(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = bias.then(|| store.zeros(format!("{name}.bias"), 1, fan_out));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }

    /// Applies the layer to one-hot rows without materializing them.
    pub fn forward_one_hot(&self, g: &mut Graph<'_>, classes: &[usize]) -> Var {
        let w = g.param(self.weight);
        let y = g.gather_rows(w, classes);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gain: store.ones(format!("{name}.gain"), 1, d),
            bias: store.zeros(format!("{name}.bias"), 1, d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Projection matrices of one multi-head attention sublayer.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
    pub d: usize,
}

impl AttentionParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && d.is_multiple_of(heads), "d must be divisible by heads");
        Self {
            wq: store.xavier(format!("{name}.wq"), d, d, rng),
            wk: store.xavier(format!("{name}.wk"), d, d, rng),
            wv: store.xavier(format!("{name}.wv"), d, d, rng),
            wo: store.xavier(format!("{name}.wo"), d, d, rng),
            heads,
            d,
        }
    }
}

/// Multi-head scaled dot-product attention.
///
/// `q` is `[n_q, d]`, `k` and `v` are `[n_k, d]`. `mask`, when given, is a
/// row-major `[n_q, n_k]` boolean array where `false` hides a key from a query.
pub fn attention(
    g: &mut Graph<'_>,
    q: Var,
    k: Var,
    v: Var,
    p: &AttentionParams,
    mask: Option<&[bool]>,
) -> Result<Var, TensorError> {
    let (wq, wk, wv, wo) = (g.param(p.wq), g.param(p.wk), g.param(p.wv), g.param(p.wo));
    let qp = g.matmul(q, wq);
    let kp = g.matmul(k, wk);
    let vp = g.matmul(v, wv);
    let dh = p.d / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let (qh, kh, vh) = if p.heads == 1 {
            (qp, kp, vp)
        } else {
            (
                g.slice_cols(qp, h * dh, dh),
                g.slice_cols(kp, h * dh, dh),
                g.slice_cols(vp, h * dh, dh),
            )
        };
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scores = g.scale(scores, scale);
        let weights = g.masked_softmax(scores, mask)?;
        outs.push(g.matmul(weights, vh));
    }
    let cat = if outs.len() == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)
    };
    Ok(g.matmul(cat, wo))
}

/// Row-major `[n, n]` lower-triangular mask.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|i| i % n <= i / n).collect()
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), d, hidden, true, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, d, true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

/// Pre-norm self-attention block: `x + attn(ln(x))`, then `x + ff(ln(x))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub attn: AttentionParams,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), d),
            attn: AttentionParams::new(store, &format!("{name}.attn"), d, heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, hidden, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let h = self.ln_attn.forward(g, x);
        let a = attention(g, h, h, h, &self.attn, mask)?;
        let x = g.add(x, a);
        let h = self.ln_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        Ok(g.add(x, f))
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention, feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub ln_self: LayerNorm,
    pub self_attn: AttentionParams,
    pub ln_cross: LayerNorm,
    pub cross_attn: AttentionParams,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d),
            self_attn: AttentionParams::new(store, &format!("{name}.self_attn"), d, heads, rng),
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d),
            cross_attn: AttentionParams::new(store, &format!("{name}.cross_attn"), d, heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, hidden, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        memory: Var,
        self_mask: Option<&[bool]>,
        memory_mask: Option<&[bool]>,
    ) -> Result<Var, TensorError> {
        let h = self.ln_self.forward(g, x);
        let a = attention(g, h, h, h, &self.self_attn, self_mask)?;
        let x = g.add(x, a);
        let h = self.ln_cross.forward(g, x);
        let c = attention(g, h, memory, memory, &self.cross_attn, memory_mask)?;
        let x = g.add(x, c);
        let h = self.ln_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        Ok(g.add(x, f))
    }
}

/// Encoder stack followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub blocks: Vec<EncoderBlock>,
    pub ln_out: LayerNorm,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..layers)
            .map(|i| EncoderBlock::new(store, &format!("{name}.block{i}"), d, heads, hidden, rng))
            .collect();
        Self {
            blocks,
            ln_out: LayerNorm::new(store, &format!("{name}.ln_out"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        for b in &self.blocks {
            x = b.forward(g, x, mask)?;
        }
        Ok(self.ln_out.forward(g, x))
    }
}

/// Causally masked decoder stack followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub blocks: Vec<DecoderBlock>,
    pub ln_out: LayerNorm,
}

impl Decoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..layers)
            .map(|i| DecoderBlock::new(store, &format!("{name}.block{i}"), d, heads, hidden, rng))
            .collect();
        Self {
            blocks,
            ln_out: LayerNorm::new(store, &format!("{name}.ln_out"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var, memory: Var) -> Result<Var, TensorError> {
        let n = g.value(x).rows();
        let mask = causal_mask(n);
        for b in &self.blocks {
            x = b.forward(g, x, memory, Some(&mask), None)?;
        }
        Ok(self.ln_out.forward(g, x))
    }
}
