//! Input embedder and post-norm transformer layers.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    param_rng, truncated_normal, EmptyRows, Group, ParamId, ParamStore, Tape, Tensor, Var, LN_EPS,
};

pub(crate) const INIT_STD: f64 = 0.02;

pub(crate) fn add_weight(
    store: &mut ParamStore,
    seed: u64,
    name: String,
    shape: &[usize],
    group: Group,
) -> Result<ParamId> {
    let t = truncated_normal(shape, INIT_STD, &mut param_rng(seed, &name));
    store.add(name, t, group)
}

pub(crate) fn add_zeros(
    store: &mut ParamStore,
    name: String,
    shape: &[usize],
    group: Group,
) -> Result<ParamId> {
    store.add(name, Tensor::zeros(shape), group)
}

/// Identity-initialised layer-norm affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d: usize, group: Group) -> Result<Self> {
        Ok(LayerNormParams {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::filled(&[d], 1.0), group)?,
            beta: add_zeros(store, format!("{prefix}.beta"), &[d], group)?,
        })
    }

    pub fn apply<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(tape.param(store, self.gamma), tape.param(store, self.beta), LN_EPS)
    }
}

/// Weight `[in × out]` plus bias `[out]`, applied as `x · W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn init(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        group: Group,
    ) -> Result<Self> {
        Ok(Linear {
            weight: add_weight(store, seed, format!("{prefix}.w"), &[d_in, d_out], group)?,
            bias: add_zeros(store, format!("{prefix}.b"), &[d_out], group)?,
        })
    }

    pub fn apply<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(tape.param(store, self.weight))?
            .add_row(tape.param(store, self.bias))
    }
}

/// Token + segment + position lookup tables followed by layer norm and dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    pub token: ParamId,
    pub position: ParamId,
    pub segment: ParamId,
    pub norm: LayerNormParams,
    pub dropout: f64,
    pub max_len: usize,
}

impl Embedder {
    pub fn init(
        store: &mut ParamStore,
        seed: u64,
        vocab_size: usize,
        max_len: usize,
        d_c: usize,
        dropout: f64,
    ) -> Result<Self> {
        let g = Group::Bert;
        Ok(Embedder {
            token: add_weight(store, seed, "embed.token".into(), &[vocab_size, d_c], g)?,
            position: add_weight(store, seed, "embed.position".into(), &[max_len, d_c], g)?,
            segment: add_weight(store, seed, "embed.segment".into(), &[2, d_c], g)?,
            norm: LayerNormParams::init(store, "embed.ln", d_c, g)?,
            dropout,
            max_len,
        })
    }

    /// Embeds tokens at positions `0..n`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: &[usize],
        segments: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let positions: Vec<usize> = (0..tokens.len()).collect();
        self.forward_at(tape, store, tokens, segments, &positions, rng)
    }

    /// Embeds tokens at explicit position ids.
    pub fn forward_at<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: &[usize],
        segments: &[usize],
        positions: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        if tokens.len() != segments.len() || tokens.len() != positions.len() {
            return Err(Error::invalid(
                "embed",
                "token, segment and position id lists differ in length",
            ));
        }
        let tok = tape.param(store, self.token).gather_rows(tokens)?;
        let seg = tape.param(store, self.segment).gather_rows(segments)?;
        let pos = tape.param(store, self.position).gather_rows(positions)?;
        let sum = tok.add(seg)?.add(pos)?;
        self.norm.apply(tape, store, sum)?.dropout(self.dropout, rng)
    }
}

/// One encoder block: `G = LN(H + MHAttn(H))`, `H' = LN(G + FFN(G))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNormParams,
    pub heads: usize,
    pub dropout: f64,
}

impl TransformerLayer {
    pub fn init(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d_c: usize,
        heads: usize,
        d_ff: usize,
        dropout: f64,
    ) -> Result<Self> {
        if heads == 0 || !d_c.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "hidden size {d_c} is not divisible by {heads} heads"
            )));
        }
        let g = Group::Bert;
        Ok(TransformerLayer {
            query: Linear::init(store, seed, &format!("{prefix}.attn.query"), d_c, d_c, g)?,
            key: Linear::init(store, seed, &format!("{prefix}.attn.key"), d_c, d_c, g)?,
            value: Linear::init(store, seed, &format!("{prefix}.attn.value"), d_c, d_c, g)?,
            output: Linear::init(store, seed, &format!("{prefix}.attn.output"), d_c, d_c, g)?,
            attn_norm: LayerNormParams::init(store, &format!("{prefix}.attn.ln"), d_c, g)?,
            ff_in: Linear::init(store, seed, &format!("{prefix}.ffn.in"), d_c, d_ff, g)?,
            ff_out: Linear::init(store, seed, &format!("{prefix}.ffn.out"), d_ff, d_c, g)?,
            ff_norm: LayerNormParams::init(store, &format!("{prefix}.ffn.ln"), d_c, g)?,
            heads,
            dropout,
        })
    }

    /// Bidirectional multi-head scaled dot-product self-attention, including
    /// the output projection.
    pub fn attention<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let d_c = x.shape()[1];
        let d_head = d_c / self.heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let q = self.query.apply(tape, store, x)?;
        let k = self.key.apply(tape, store, x)?;
        let v = self.value.apply(tape, store, x)?;
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * d_head;
            let qh = q.slice_cols(start, d_head)?;
            let kh = k.slice_cols(start, d_head)?;
            let vh = v.slice_cols(start, d_head)?;
            let probs = qh
                .matmul(kh.transpose()?)?
                .scale(scale)?
                .softmax(None, EmptyRows::Reject)?;
            heads.push(probs.matmul(vh)?);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            Var::concat_cols(&heads)?
        };
        self.output.apply(tape, store, joined)
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        h: Var<'t>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let attn = self
            .attention(tape, store, h)?
            .dropout(self.dropout, rng.as_deref_mut())?;
        let g = self.attn_norm.apply(tape, store, h.add(attn)?)?;
        let ff = self.ff_in.apply(tape, store, g)?.relu()?;
        let ff = self
            .ff_out
            .apply(tape, store, ff)?
            .dropout(self.dropout, rng)?;
        self.ff_norm.apply(tape, store, g.add(ff)?)
    }
}

/// Embedder plus a stack of transformer layers, with no lexicon injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub embedder: Embedder,
    pub layers: Vec<TransformerLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_c: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub layers: usize,
}

impl Encoder {
    pub fn init(store: &mut ParamStore, seed: u64, shape: EncoderShape, dropout: f64) -> Result<Self> {
        let embedder = Embedder::init(store, seed, shape.vocab_size, shape.max_len, shape.d_c, dropout)?;
        let layers = (1..=shape.layers)
            .map(|l| {
                TransformerLayer::init(
                    store,
                    seed,
                    &format!("layer{l}"),
                    shape.d_c,
                    shape.heads,
                    shape.d_ff,
                    dropout,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Encoder { embedder, layers })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let segments = vec![0; tokens.len()];
        let mut h = self
            .embedder
            .forward(tape, store, tokens, &segments, rng.as_deref_mut())?;
        for layer in &self.layers {
            h = layer.forward(tape, store, h, rng.as_deref_mut())?;
        }
        Ok(h)
    }
}
