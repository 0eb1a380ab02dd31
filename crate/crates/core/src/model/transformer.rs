//! Pre-norm transformer block: `x + Attn(LN(x))`, then `x + FFN(LN(x))`.

use crate::autodiff::{Activation, ParamId, ParamStore, Rng, Tape, Var};
use crate::error::Result;

/// Which keys each query may attend to.
#[derive(Debug, Clone, Copy)]
pub enum AttentionMask<'a> {
    Full,
    /// Query `i` sees keys `0..=i`.
    Causal,
    /// Row-major `m×m` allow-list.
    Allowed(&'a [bool]),
}

impl AttentionMask<'_> {
    fn allowed(&self, m: usize) -> Option<Vec<bool>> {
        match self {
            AttentionMask::Full => None,
            AttentionMask::Causal => Some((0..m * m).map(|k| k % m <= k / m).collect()),
            AttentionMask::Allowed(a) => Some(a.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub heads: usize,
    pub activation: Activation,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

pub struct BlockOutput {
    pub out: Var,
    /// One `m×m` attention matrix per head.
    pub attention: Vec<Var>,
}

impl Block {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Block {
            heads,
            activation,
            ln1_gain: store.ones(n("ln1.gain"), &[1, dim]),
            ln1_bias: store.zeros(n("ln1.bias"), &[1, dim]),
            wq: store.xavier(n("attn.wq"), &[dim, dim], rng),
            bq: store.zeros(n("attn.bq"), &[1, dim]),
            wk: store.xavier(n("attn.wk"), &[dim, dim], rng),
            bk: store.zeros(n("attn.bk"), &[1, dim]),
            wv: store.xavier(n("attn.wv"), &[dim, dim], rng),
            bv: store.zeros(n("attn.bv"), &[1, dim]),
            wo: store.xavier(n("attn.wo"), &[dim, dim], rng),
            bo: store.zeros(n("attn.bo"), &[1, dim]),
            ln2_gain: store.ones(n("ln2.gain"), &[1, dim]),
            ln2_bias: store.zeros(n("ln2.bias"), &[1, dim]),
            w1: store.xavier(n("ffn.w1"), &[dim, ffn_dim], rng),
            b1: store.zeros(n("ffn.b1"), &[1, ffn_dim]),
            w2: store.xavier(n("ffn.w2"), &[ffn_dim, dim], rng),
            b2: store.zeros(n("ffn.b2"), &[1, dim]),
        }
    }

    fn linear(tape: &mut Tape<'_>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = tape.param(w);
        let b = tape.param(b);
        let y = tape.matmul(x, w)?;
        Ok(tape.add_row(y, b)?)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, mask: AttentionMask<'_>) -> Result<BlockOutput> {
        let (m, dim) = tape.shape(x);
        let dh = dim / self.heads;
        let allowed = mask.allowed(m);

        let g1 = tape.param(self.ln1_gain);
        let b1 = tape.param(self.ln1_bias);
        let xn = tape.layer_norm(x, g1, b1)?;
        let q = Self::linear(tape, xn, self.wq, self.bq)?;
        let k = Self::linear(tape, xn, self.wk, self.bk)?;
        let v = Self::linear(tape, xn, self.wv, self.bv)?;

        let mut attention = Vec::with_capacity(self.heads);
        let mut contexts = Vec::with_capacity(self.heads);
        let scale = 1.0 / (dh as f64).sqrt();
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * dh, dh)?,
                    tape.slice_cols(k, h * dh, dh)?,
                    tape.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax_rows(scores, allowed.as_deref())?;
            contexts.push(tape.matmul(a, vh)?);
            attention.push(a);
        }
        let ctx = if self.heads == 1 {
            contexts[0]
        } else {
            tape.concat_cols(&contexts)?
        };
        let attn_out = Self::linear(tape, ctx, self.wo, self.bo)?;
        let x1 = tape.add(x, attn_out)?;

        let g2 = tape.param(self.ln2_gain);
        let b2 = tape.param(self.ln2_bias);
        let xn2 = tape.layer_norm(x1, g2, b2)?;
        let hidden = Self::linear(tape, xn2, self.w1, self.b1)?;
        let hidden = tape.activation(hidden, self.activation);
        let ffn = Self::linear(tape, hidden, self.w2, self.b2)?;
        let out = tape.add(x1, ffn)?;
        Ok(BlockOutput { out, attention })
    }

    /// Every parameter handle of the block.
    pub fn param_ids(&self) -> [ParamId; 16] {
        [
            self.ln1_gain,
            self.ln1_bias,
            self.wq,
            self.bq,
            self.wk,
            self.bk,
            self.wv,
            self.bv,
            self.wo,
            self.bo,
            self.ln2_gain,
            self.ln2_bias,
            self.w1,
            self.b1,
            self.w2,
            self.b2,
        ]
    }
}

/// Applies `blocks` in order; returns the output and the last block's
/// attention matrices.
pub fn run_blocks(
    tape: &mut Tape<'_>,
    blocks: &[Block],
    mut x: Var,
    mask: AttentionMask<'_>,
) -> Result<BlockOutput> {
    let mut attention = Vec::new();
    for b in blocks {
        let o = b.forward(tape, x, mask)?;
        x = o.out;
        attention = o.attention;
    }
    Ok(BlockOutput { out: x, attention })
}
