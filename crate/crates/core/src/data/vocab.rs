use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Dense item id. Real items occupy `0..n_items`; the reserved tokens follow.
pub type ItemId = usize;

/// Bijection between raw item keys and dense ids, plus the reserved tokens.
///
/// Layout of the embedding table rows:
///
/// | rows              | meaning                 |
/// |-------------------|-------------------------|
/// | `0..n`            | real items              |
/// | `n`               | `[eos]`                 |
/// | `n + 1`           | `[mask]`                |
/// | `n + 2`           | padding                 |
///
/// Generators predict over `0..=n` (items plus `[eos]`); the recommender
/// ranks over `0..n` only, so `[eos]` is never a recommendation candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemVocabulary {
    keys: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, ItemId>,
}

impl ItemVocabulary {
    pub fn new() -> Self {
        ItemVocabulary {
            keys: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_keys(keys: Vec<String>) -> Self {
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        ItemVocabulary { keys, index }
    }

    /// Id for `key`, allocating the next id on first sight.
    pub fn intern(&mut self, key: &str) -> ItemId {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key.to_string());
        self.index.insert(key.to_string(), id);
        id
    }

    pub fn id(&self, key: &str) -> Option<ItemId> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: ItemId) -> Option<&str> {
        self.keys.get(id).map(String::as_str)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn n_items(&self) -> usize {
        self.keys.len()
    }

    pub fn tokens(&self) -> SpecialTokens {
        SpecialTokens::new(self.n_items())
    }

    /// Rebuilds the reverse index after deserialisation.
    pub(crate) fn reindex(&mut self) {
        self.index = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
    }
}

impl Default for ItemVocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// Reserved ids derived from the number of real items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub n_items: usize,
}

impl SpecialTokens {
    pub fn new(n_items: usize) -> Self {
        SpecialTokens { n_items }
    }

    pub fn eos(&self) -> ItemId {
        self.n_items
    }

    pub fn mask(&self) -> ItemId {
        self.n_items + 1
    }

    pub fn pad(&self) -> ItemId {
        self.n_items + 2
    }

    /// Rows in the embedding table.
    pub fn table_rows(&self) -> usize {
        self.n_items + 3
    }

    /// Output classes of the insertion generator (items plus `[eos]`).
    pub fn generator_classes(&self) -> usize {
        self.n_items + 1
    }

    pub fn is_item(&self, id: ItemId) -> bool {
        id < self.n_items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intern_is_bijective() {
        let mut v = ItemVocabulary::new();
        assert_eq!(v.intern("b"), 0);
        assert_eq!(v.intern("a"), 1);
        assert_eq!(v.intern("b"), 0);
        assert_eq!(v.key(1), Some("a"));
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.n_items(), 2);
    }

    #[test]
    fn reserved_tokens_are_outside_item_range() {
        let t = SpecialTokens::new(10);
        assert_eq!((t.eos(), t.mask(), t.pad()), (10, 11, 12));
        assert!(!t.is_item(t.eos()) && !t.is_item(t.mask()) && !t.is_item(t.pad()));
        assert_eq!(t.table_rows(), 13);
        assert_eq!(t.generator_classes(), 11);
    }
}
