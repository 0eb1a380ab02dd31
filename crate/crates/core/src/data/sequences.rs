use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::events::Event;
use super::vocab::{ItemId, ItemVocabulary};
use crate::error::{Error, Result};

/// Maximum number of training items kept per sequence (most recent).
pub const DEFAULT_MAX_RAW_LEN: usize = 50;

/// One user's chronologically ordered items with a leave-two-out split:
/// the last item is the test item, the second last the validation item, the
/// rest are training items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub user: String,
    pub items: Vec<ItemId>,
}

impl InteractionSequence {
    pub fn new(user: impl Into<String>, items: Vec<ItemId>) -> Result<Self> {
        if items.len() < 3 {
            return Err(Error::Data(format!(
                "sequence with {} items cannot be split into train/valid/test",
                items.len()
            )));
        }
        Ok(InteractionSequence {
            user: user.into(),
            items,
        })
    }

    pub fn test_item(&self) -> ItemId {
        self.items[self.items.len() - 1]
    }

    pub fn valid_item(&self) -> ItemId {
        self.items[self.items.len() - 2]
    }

    pub fn train_items(&self) -> &[ItemId] {
        &self.items[..self.items.len() - 2]
    }

    /// Everything before the test item, capped to the `max_len` most recent.
    pub fn test_input(&self, max_len: usize) -> &[ItemId] {
        let hist = &self.items[..self.items.len() - 1];
        &hist[hist.len().saturating_sub(max_len)..]
    }

    /// Input used to predict the validation item.
    pub fn valid_input(&self, max_len: usize) -> &[ItemId] {
        let t = self.train_items();
        &t[t.len().saturating_sub(max_len)..]
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains(&item)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub users: usize,
    pub dropped_short: usize,
    pub truncated: usize,
}

/// Groups events per user (users in order of first appearance), sorts each
/// user's events by time with ties kept in input order, assigns dense item
/// ids in order of first appearance, and keeps the `max_raw_len` most recent
/// training items (plus the validation and test items).
pub fn build_sequences(
    events: &[Event],
    max_raw_len: usize,
) -> Result<(Vec<InteractionSequence>, ItemVocabulary, BuildStats)> {
    let mut order: Vec<&str> = Vec::new();
    let mut per_user: HashMap<&str, Vec<(i64, usize)>> = HashMap::new();
    let mut vocab = ItemVocabulary::new();
    for e in events {
        let id = vocab.intern(&e.item);
        let entry = per_user.entry(&e.user).or_insert_with(|| {
            order.push(&e.user);
            Vec::new()
        });
        entry.push((e.time, id));
    }
    let mut stats = BuildStats::default();
    let mut sequences = Vec::with_capacity(order.len());
    for user in order {
        let mut recs = per_user.remove(user).unwrap_or_default();
        // stable: equal timestamps keep file order
        recs.sort_by_key(|&(t, _)| t);
        let mut items: Vec<ItemId> = recs.into_iter().map(|(_, i)| i).collect();
        if items.len() < 3 {
            stats.dropped_short += 1;
            continue;
        }
        let keep = max_raw_len + 2;
        if items.len() > keep {
            items.drain(..items.len() - keep);
            stats.truncated += 1;
        }
        sequences.push(InteractionSequence::new(user, items)?);
    }
    if stats.dropped_short > 0 {
        log::warn!(
            "dropped {} users with fewer than 3 items",
            stats.dropped_short
        );
    }
    stats.users = sequences.len();
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((sequences, vocab, stats))
}
