//! Item + position embedding followed by bidirectional blocks. Shared by the
//! modifier and the recommender.

use super::transformer::{run_blocks, AttentionMask, Block};
use super::Model;
use crate::autodiff::{ParamId, Rng, Tape, Var};
use crate::data::ItemId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderParams {
    /// `table_rows × dim`: items, then `[eos]`, `[mask]`, padding.
    pub item_emb: ParamId,
    /// `max_positions × dim`, also used by the reverse generator.
    pub pos_emb: ParamId,
    pub blocks: Vec<Block>,
}

pub struct Encoded {
    pub h: Var,
    /// Last block's attention, one matrix per head.
    pub attention: Vec<Var>,
}

/// Several sequences padded to a common length and stacked row-wise.
pub struct EncodedBatch {
    /// `(batch · max_len) × dim`; sequence `b` occupies rows `b·max_len..`.
    pub h: Var,
    pub lengths: Vec<usize>,
    pub max_len: usize,
    pub attention: Vec<Var>,
}

impl EncodedBatch {
    pub fn rows(&self, tape: &mut Tape<'_>, b: usize) -> Result<Var> {
        Ok(tape.slice_rows(self.h, b * self.max_len, self.lengths[b])?)
    }
}

impl Model {
    fn check_len(&self, len: usize) -> Result<()> {
        let max = self.config.max_positions();
        if len == 0 || len > max {
            return Err(Error::Contract(format!(
                "sequence length {len} outside 1..={max} positions"
            )));
        }
        Ok(())
    }

    /// `h_t = e_t + p_t`, then dropout when `rng` is given.
    pub fn embed(&self, tape: &mut Tape<'_>, ids: &[ItemId], rng: Option<&mut Rng>) -> Result<Var> {
        self.check_len(ids.len())?;
        let e = tape.param(self.encoder.item_emb);
        let p = tape.param(self.encoder.pos_emb);
        let items = tape.embedding(e, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = tape.gather_rows(p, &positions)?;
        let h0 = tape.add(items, pos)?;
        Ok(tape.dropout(h0, self.config.dropout, rng))
    }

    pub fn encode(&self, tape: &mut Tape<'_>, ids: &[ItemId], rng: Option<&mut Rng>) -> Result<Encoded> {
        let h0 = self.embed(tape, ids, rng)?;
        let o = run_blocks(tape, &self.encoder.blocks, h0, AttentionMask::Full)?;
        Ok(Encoded {
            h: o.out,
            attention: o.attention,
        })
    }

    /// Encodes several sequences in one pass. Each is padded to the longest;
    /// attention is block-diagonal and never reaches a padding key.
    pub fn encode_padded(
        &self,
        tape: &mut Tape<'_>,
        seqs: &[&[ItemId]],
        rng: Option<&mut Rng>,
    ) -> Result<EncodedBatch> {
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        self.check_len(max_len)?;
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::Contract("cannot encode an empty sequence".into()));
        }
        let pad = self.tokens().pad();
        let total = seqs.len() * max_len;
        let mut ids = Vec::with_capacity(total);
        let mut positions = Vec::with_capacity(total);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(pad, max_len - s.len()));
            positions.extend(0..max_len);
        }
        let mut allowed = vec![false; total * total];
        for (b, s) in seqs.iter().enumerate() {
            let base = b * max_len;
            for i in 0..max_len {
                for j in 0..s.len() {
                    allowed[(base + i) * total + base + j] = true;
                }
            }
        }
        let e = tape.param(self.encoder.item_emb);
        let p = tape.param(self.encoder.pos_emb);
        let items = tape.embedding(e, &ids)?;
        let pos = tape.gather_rows(p, &positions)?;
        let h0 = tape.add(items, pos)?;
        let h0 = tape.dropout(h0, self.config.dropout, rng);
        let o = run_blocks(tape, &self.encoder.blocks, h0, AttentionMask::Allowed(&allowed))?;
        Ok(EncodedBatch {
            h: o.out,
            lengths: seqs.iter().map(|s| s.len()).collect(),
            max_len,
            attention: o.attention,
        })
    }
}
