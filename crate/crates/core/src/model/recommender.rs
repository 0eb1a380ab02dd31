//! Masked-item recommender on top of the shared encoder.

use serde::{Deserialize, Serialize};

use super::config::Directionality;
use super::transformer::{run_blocks, AttentionMask, Block};
use super::Model;
use crate::autodiff::{Rng, Tape, Var};
use crate::corruption::{append_eval_mask, MaskedSequence};
use crate::data::ItemId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommenderParams {
    pub blocks: Vec<Block>,
}

/// One evaluation case: the positive first, then the negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub candidates: Vec<ItemId>,
    pub scores: Vec<f64>,
    /// 1-based rank of the positive; ties count against it.
    pub rank: usize,
}

/// `1 + #{negatives scoring at least as high as the positive}`.
pub fn pessimistic_rank(positive: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

impl Model {
    /// `H_r = Trm(H_e)`, causal when the recommender is unidirectional.
    pub fn recommend_forward(&self, tape: &mut Tape<'_>, h_e: Var) -> Result<Var> {
        let mask = match self.config.recommender {
            Directionality::Bi => AttentionMask::Full,
            Directionality::Uni => AttentionMask::Causal,
        };
        Ok(run_blocks(tape, &self.recommender.blocks, h_e, mask)?.out)
    }

    /// `E h_t` over real items for each masked position.
    pub fn masked_logits(
        &self,
        tape: &mut Tape<'_>,
        h_r: Var,
        tokens: &[ItemId],
        positions: &[usize],
    ) -> Result<Var> {
        let mask = self.tokens().mask();
        for &p in positions {
            if tokens.get(p) != Some(&mask) {
                return Err(Error::Contract(format!("position {p} does not hold [mask]")));
            }
        }
        let rows = tape.gather_rows(h_r, positions)?;
        let e = tape.param(self.encoder.item_emb);
        let items = tape.slice_rows(e, 0, self.config.n_items)?;
        Ok(tape.matmul_nt(rows, items)?)
    }

    /// Summed cross-entropy over the masked positions of one view.
    pub fn masked_view_loss(
        &self,
        tape: &mut Tape<'_>,
        view: &MaskedSequence,
        rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let h_e = self.encode(tape, &view.tokens, rng)?.h;
        let h_r = self.recommend_forward(tape, h_e)?;
        let logits = self.masked_logits(tape, h_r, &view.tokens, &view.positions)?;
        Ok(tape.cross_entropy(logits, &view.targets)?)
    }

    /// Sum of the per-view losses (raw and modified views).
    pub fn recommender_loss(
        &self,
        tape: &mut Tape<'_>,
        views: &[&MaskedSequence],
        mut rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let mut total: Option<Var> = None;
        for v in views {
            let l = self.masked_view_loss(tape, v, rng.as_deref_mut())?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        total.ok_or_else(|| Error::Contract("recommender loss needs at least one view".into()))
    }

    /// Scores of every real item as the next item after `seq` (eval mode).
    pub fn next_item_scores(&self, seq: &[ItemId]) -> Result<Vec<f64>> {
        let input = append_eval_mask(seq, self.tokens());
        let mut tape = Tape::inference(&self.params);
        let h_e = self.encode(&mut tape, &input, None)?.h;
        let h_r = self.recommend_forward(&mut tape, h_e)?;
        let logits = self.masked_logits(&mut tape, h_r, &input, &[input.len() - 1])?;
        Ok(tape.data(logits).to_vec())
    }

    /// Ranks `positive` against `negatives`, none of which may appear in
    /// `interacted`.
    pub fn score_next_item(
        &self,
        seq: &[ItemId],
        positive: ItemId,
        negatives: &[ItemId],
        interacted: &[ItemId],
    ) -> Result<RankingResult> {
        if let Some(bad) = negatives.iter().find(|n| interacted.contains(n) || **n == positive) {
            return Err(Error::Contract(format!("negative candidate {bad} was interacted with")));
        }
        let all = self.next_item_scores(seq)?;
        let mut candidates = Vec::with_capacity(negatives.len() + 1);
        candidates.push(positive);
        candidates.extend_from_slice(negatives);
        let scores: Vec<f64> = candidates.iter().map(|&c| all[c]).collect();
        let rank = pessimistic_rank(scores[0], &scores[1..]);
        Ok(RankingResult {
            candidates,
            scores,
            rank,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_rank_pessimistically() {
        assert_eq!(pessimistic_rank(0.9, &[0.1, 0.2]), 1);
        assert_eq!(pessimistic_rank(0.5, &[0.5, 0.1]), 2);
        assert_eq!(pessimistic_rank(0.0, &[1.0, 2.0, 0.0]), 4);
    }
}
