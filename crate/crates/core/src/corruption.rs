//! Self-supervised examples: random keep/delete/insert corruption of a raw
//! sequence for the modifier, and item masking for the recommender.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Rng;
use crate::data::{ItemId, SpecialTokens};
use crate::error::{Error, Result};

/// Continue-probability of the geometric noise-run length.
pub const INSERT_RUN_CONTINUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    pub p_keep: f64,
    pub p_delete: f64,
    pub p_insert: f64,
    pub p_mask: f64,
    pub max_raw_len: usize,
    pub max_insert_run: usize,
    pub max_modified_len: usize,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            p_keep: 0.4,
            p_delete: 0.5,
            p_insert: 0.1,
            p_mask: 0.5,
            max_raw_len: 50,
            max_insert_run: 5,
            max_modified_len: 60,
        }
    }
}

impl CorruptionConfig {
    /// Same lengths, different operation probabilities.
    pub fn with_probs(self, p_keep: f64, p_delete: f64, p_insert: f64) -> Self {
        CorruptionConfig {
            p_keep,
            p_delete,
            p_insert,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_keep, self.p_delete, self.p_insert];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!("operation probabilities out of [0,1]: {ps:?}")));
        }
        let total: f64 = ps.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("operation probabilities sum to {total}, not 1")));
        }
        if !(0.0..=1.0).contains(&self.p_mask) {
            return Err(Error::Config(format!("p_mask {} out of [0,1]", self.p_mask)));
        }
        if self.max_raw_len == 0 || self.max_insert_run == 0 || self.max_modified_len == 0 {
            return Err(Error::Config("corruption lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Per-position operation; serialised as 0/1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum OperationLabel {
    Keep = 0,
    Delete = 1,
    Insert = 2,
}

impl OperationLabel {
    pub const ALL: [OperationLabel; 3] = [OperationLabel::Keep, OperationLabel::Delete, OperationLabel::Insert];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl From<OperationLabel> for u8 {
    fn from(l: OperationLabel) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for OperationLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        OperationLabel::from_index(v as usize).ok_or_else(|| format!("operation label {v} out of range"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionExample {
    /// The part of the input that `corrupted` can restore: the whole input
    /// unless clipping dropped its oldest positions.
    pub raw: Vec<ItemId>,
    pub corrupted: Vec<ItemId>,
    pub labels: Vec<OperationLabel>,
    /// Position in `corrupted` → deleted originals in reverse order, then `[eos]`.
    pub insert_targets: BTreeMap<usize, Vec<ItemId>>,
    /// Action drawn for each input position before the last-position and
    /// run-cap adjustments.
    pub sampled_actions: Vec<OperationLabel>,
}

fn noise_run_len(max: usize, rng: &mut Rng) -> usize {
    let mut k = 1;
    while k < max && rng.bernoulli(INSERT_RUN_CONTINUE) {
        k += 1;
    }
    k
}

/// Corrupts `raw`. Noise items are uniform over the real items of `tokens`.
///
/// A deleted run never grows past `max_insert_run`: once it is that long the
/// next drawn Delete is applied as Keep, so every deleted item is recoverable.
pub fn corrupt(
    raw: &[ItemId],
    config: &CorruptionConfig,
    tokens: SpecialTokens,
    rng: &mut Rng,
) -> Result<CorruptionExample> {
    if raw.len() < 2 {
        return Err(Error::Data(format!(
            "corruption needs at least 2 items, got {}",
            raw.len()
        )));
    }
    if tokens.n_items == 0 {
        return Err(Error::Data("corruption needs a nonempty item vocabulary".into()));
    }
    let weights = [config.p_keep, config.p_delete, config.p_insert];
    let n = raw.len();
    let mut corrupted = Vec::with_capacity(n + 8);
    let mut labels = Vec::with_capacity(n + 8);
    // raw index of each corrupted position (None for noise)
    let mut origin: Vec<Option<usize>> = Vec::with_capacity(n + 8);
    let mut targets: BTreeMap<usize, Vec<ItemId>> = BTreeMap::new();
    let mut sampled = Vec::with_capacity(n);
    let mut pending: Vec<ItemId> = Vec::new();

    for (t, &item) in raw.iter().enumerate() {
        let drawn = OperationLabel::from_index(rng.categorical(&weights)).expect("three weights");
        sampled.push(drawn);
        let mut action = drawn;
        if action == OperationLabel::Delete && t == n - 1 {
            action = if config.p_keep + config.p_insert > 0.0 {
                if rng.categorical(&[config.p_keep, config.p_insert]) == 0 {
                    OperationLabel::Keep
                } else {
                    OperationLabel::Insert
                }
            } else {
                OperationLabel::Keep
            };
        }
        if action == OperationLabel::Delete && pending.len() >= config.max_insert_run {
            action = OperationLabel::Keep;
        }
        if action == OperationLabel::Delete {
            pending.push(item);
            continue;
        }
        if action == OperationLabel::Insert {
            for _ in 0..noise_run_len(config.max_insert_run, rng) {
                corrupted.push(rng.below(tokens.n_items));
                labels.push(OperationLabel::Delete);
                origin.push(None);
            }
        }
        if pending.is_empty() {
            labels.push(OperationLabel::Keep);
        } else {
            let mut target: Vec<ItemId> = pending.drain(..).rev().collect();
            target.push(tokens.eos());
            targets.insert(corrupted.len(), target);
            labels.push(OperationLabel::Insert);
        }
        corrupted.push(item);
        origin.push(Some(t));
    }

    let mut raw_out = raw.to_vec();
    if corrupted.len() > config.max_modified_len {
        let cut = corrupted.len() - config.max_modified_len;
        corrupted.drain(..cut);
        labels.drain(..cut);
        origin.drain(..cut);
        targets = targets.into_iter().filter(|&(p, _)| p >= cut).map(|(p, v)| (p - cut, v)).collect();
        let first = origin
            .iter()
            .position(Option::is_some)
            .expect("last raw item survives clipping");
        let start = origin[first].unwrap() - targets.get(&first).map_or(0, |v| v.len() - 1);
        raw_out.drain(..start);
    }

    Ok(CorruptionExample {
        raw: raw_out,
        corrupted,
        labels,
        insert_targets: targets,
        sampled_actions: sampled,
    })
}

/// Applies the inverse operations to `corrupted`: drops Delete positions and
/// restores each Insert target (without `[eos]`) before its anchor.
pub fn reconstruct(example: &CorruptionExample, tokens: SpecialTokens) -> Vec<ItemId> {
    let mut out = Vec::with_capacity(example.raw.len());
    for (p, (&item, &label)) in example.corrupted.iter().zip(&example.labels).enumerate() {
        match label {
            OperationLabel::Delete => {}
            OperationLabel::Keep => out.push(item),
            OperationLabel::Insert => {
                if let Some(t) = example.insert_targets.get(&p) {
                    out.extend(t.iter().rev().filter(|&&i| i != tokens.eos()));
                }
                out.push(item);
            }
        }
    }
    out
}

/// Which positions the recommender may mask during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Each position independently with probability `p_mask`, at least one.
    #[default]
    Random,
    /// Only the final position.
    LastOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub tokens: Vec<ItemId>,
    pub positions: Vec<usize>,
    pub targets: Vec<ItemId>,
}

/// Replaces positions with `[mask]`; when the draw masks nothing, one
/// uniformly chosen position is masked.
pub fn mask_for_recommender(
    seq: &[ItemId],
    p_mask: f64,
    policy: MaskPolicy,
    tokens: SpecialTokens,
    rng: &mut Rng,
) -> Result<MaskedSequence> {
    if seq.is_empty() {
        return Err(Error::Data("cannot mask an empty sequence".into()));
    }
    let mut positions: Vec<usize> = match policy {
        MaskPolicy::LastOnly => vec![seq.len() - 1],
        MaskPolicy::Random => (0..seq.len()).filter(|_| rng.bernoulli(p_mask)).collect(),
    };
    if positions.is_empty() {
        positions.push(rng.below(seq.len()));
    }
    let mut masked = seq.to_vec();
    let targets = positions.iter().map(|&p| seq[p]).collect();
    for &p in &positions {
        masked[p] = tokens.mask();
    }
    Ok(MaskedSequence {
        tokens: masked,
        positions,
        targets,
    })
}

/// `seq` followed by one `[mask]`. Not idempotent: each call appends another.
pub fn append_eval_mask(seq: &[ItemId], tokens: SpecialTokens) -> Vec<ItemId> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    out.extend_from_slice(seq);
    out.push(tokens.mask());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOK: SpecialTokens = SpecialTokens { n_items: 20 };

    #[test]
    fn keep_only_is_identity() {
        let cfg = CorruptionConfig::default().with_probs(1.0, 0.0, 0.0);
        let raw: Vec<ItemId> = (0..10).collect();
        let ex = corrupt(&raw, &cfg, TOK, &mut Rng::new(1)).unwrap();
        assert_eq!(ex.corrupted, raw);
        assert!(ex.labels.iter().all(|&l| l == OperationLabel::Keep));
        assert!(ex.insert_targets.is_empty());
    }

    #[test]
    fn forced_deletes_become_one_reversed_target() {
        let cfg = CorruptionConfig::default().with_probs(0.0, 1.0, 0.0);
        let ex = corrupt(&[3, 4, 5], &cfg, TOK, &mut Rng::new(0)).unwrap();
        assert_eq!(ex.corrupted, vec![5]);
        assert_eq!(ex.labels, vec![OperationLabel::Insert]);
        assert_eq!(ex.insert_targets[&0], vec![4, 3, TOK.eos()]);
        assert_eq!(reconstruct(&ex, TOK), vec![3, 4, 5]);
    }

    #[test]
    fn long_delete_runs_are_split_by_a_keep() {
        let cfg = CorruptionConfig::default().with_probs(0.0, 1.0, 0.0);
        let raw: Vec<ItemId> = (0..9).collect();
        let ex = corrupt(&raw, &cfg, TOK, &mut Rng::new(0)).unwrap();
        assert_eq!(ex.corrupted, vec![5, 8]);
        assert_eq!(ex.insert_targets[&0], vec![4, 3, 2, 1, 0, TOK.eos()]);
        assert_eq!(ex.insert_targets[&1], vec![7, 6, TOK.eos()]);
        assert_eq!(reconstruct(&ex, TOK), raw);
    }

    #[test]
    fn short_input_rejected() {
        assert!(corrupt(&[1], &CorruptionConfig::default(), TOK, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn clipping_keeps_a_restorable_suffix() {
        let cfg = CorruptionConfig {
            max_modified_len: 6,
            ..CorruptionConfig::default().with_probs(0.0, 0.0, 1.0)
        };
        let raw: Vec<ItemId> = (0..8).collect();
        let ex = corrupt(&raw, &cfg, TOK, &mut Rng::new(5)).unwrap();
        assert_eq!(ex.corrupted.len(), 6);
        assert_eq!(reconstruct(&ex, TOK), ex.raw);
        assert!(raw.ends_with(&ex.raw));
    }

    #[test]
    fn golden_seed_42() {
        let raw: Vec<ItemId> = (0..10).collect();
        let ex = corrupt(&raw, &CorruptionConfig::default(), TOK, &mut Rng::new(42)).unwrap();
        let labels: Vec<u8> = ex.labels.iter().map(|&l| l.into()).collect();
        assert_eq!(ex.corrupted, vec![6, 16, 1, 3, 14, 5, 6, 8, 9]);
        assert_eq!(labels, vec![1, 1, 2, 2, 1, 2, 0, 2, 0]);
        let targets: Vec<(usize, Vec<ItemId>)> = ex.insert_targets.clone().into_iter().collect();
        assert_eq!(targets, vec![(2, vec![0, 20]), (3, vec![2, 20]), (5, vec![4, 20]), (7, vec![7, 20])]);
        assert_eq!(reconstruct(&ex, TOK), raw);
    }

    #[test]
    fn masking_rules() {
        let seq: Vec<ItemId> = (0..8).collect();
        let all = mask_for_recommender(&seq, 1.0, MaskPolicy::Random, TOK, &mut Rng::new(0)).unwrap();
        assert_eq!(all.targets, seq);
        assert!(all.tokens.iter().all(|&t| t == TOK.mask()));
        let one = mask_for_recommender(&seq, 0.0, MaskPolicy::Random, TOK, &mut Rng::new(0)).unwrap();
        assert_eq!(one.positions.len(), 1);
        let last = mask_for_recommender(&seq, 0.5, MaskPolicy::LastOnly, TOK, &mut Rng::new(0)).unwrap();
        assert_eq!(last.positions, vec![7]);
        let gold = mask_for_recommender(&seq, 0.5, MaskPolicy::Random, TOK, &mut Rng::new(7)).unwrap();
        assert_eq!(gold.positions, vec![0, 1, 5, 6]);
    }

    #[test]
    fn eval_mask_appends_every_call() {
        let once = append_eval_mask(&[1, 2], TOK);
        assert_eq!(once, vec![1, 2, TOK.mask()]);
        assert_eq!(append_eval_mask(&once, TOK), vec![1, 2, TOK.mask(), TOK.mask()]);
        assert_eq!(append_eval_mask(&[0; 50], TOK).len(), 51);
    }

    #[test]
    fn labels_serialise_as_integers() {
        assert_eq!(serde_json::to_string(&OperationLabel::Insert).unwrap(), "2");
        assert_eq!(serde_json::from_str::<OperationLabel>("1").unwrap(), OperationLabel::Delete);
        assert!(serde_json::from_str::<OperationLabel>("3").is_err());
    }
}
