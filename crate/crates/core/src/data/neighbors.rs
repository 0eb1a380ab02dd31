//! Similar-sequence selection by Jaccard similarity over training items.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sequences::InteractionSequence;
use super::vocab::ItemId;

pub const DEFAULT_MAX_NEIGHBORS: usize = 10;
pub const DEFAULT_MIN_SIMILARITY: f64 = 0.1;

fn score(intersection: usize, union: usize) -> f64 {
    intersection as f64 / union as f64
}

/// `|a ∩ b| / |a ∪ b|`; zero when both sets are empty.
pub fn jaccard(a: &BTreeSet<ItemId>, b: &BTreeSet<ItemId>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    score(inter, union)
}

pub fn item_set(items: &[ItemId]) -> BTreeSet<ItemId> {
    items.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: usize,
    pub score: f64,
}

/// Per sequence, up to `k` other sequences with similarity strictly above
/// the threshold, best first (ties: lower id first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    pub lists: Vec<Vec<Neighbor>>,
}

impl NeighborIndex {
    pub fn neighbors(&self, seq: usize) -> &[Neighbor] {
        &self.lists[seq]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborConfig {
    pub max_neighbors: usize,
    pub min_similarity: f64,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            max_neighbors: DEFAULT_MAX_NEIGHBORS,
            min_similarity: DEFAULT_MIN_SIMILARITY,
        }
    }
}

pub(crate) fn rank_candidates(mut cands: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    cands.truncate(k);
    cands
}

/// Builds the index from each sequence's training items using an inverted
/// item → sequences index, so only pairs sharing an item are scored.
pub fn build_neighbor_index(sequences: &[InteractionSequence], config: NeighborConfig) -> NeighborIndex {
    let sets: Vec<Vec<ItemId>> = sequences.iter().map(|s| s.train_items().to_vec()).collect();
    build_from_sets(&sets, config)
}

/// Index over arbitrary item lists; duplicates within a list are ignored.
pub fn build_from_sets(sets: &[Vec<ItemId>], config: NeighborConfig) -> NeighborIndex {
    let sets: Vec<Vec<ItemId>> = sets.iter().map(|s| item_set(s).into_iter().collect()).collect();
    let n_items = sets.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut postings: Vec<Vec<usize>> = vec![Vec::new(); n_items];
    for (sid, set) in sets.iter().enumerate() {
        for &i in set {
            postings[i].push(sid);
        }
    }
    let lists = (0..sets.len())
        .into_par_iter()
        .map(|a| {
            let mut overlap = vec![0usize; sets.len()];
            let mut touched = Vec::new();
            for &i in &sets[a] {
                for &b in &postings[i] {
                    if b == a {
                        continue;
                    }
                    if overlap[b] == 0 {
                        touched.push(b);
                    }
                    overlap[b] += 1;
                }
            }
            let cands = touched
                .into_iter()
                .filter_map(|b| {
                    let inter = overlap[b];
                    let s = score(inter, sets[a].len() + sets[b].len() - inter);
                    (s > config.min_similarity).then_some(Neighbor { id: b, score: s })
                })
                .collect();
            rank_candidates(cands, config.max_neighbors)
        })
        .collect();
    NeighborIndex { lists }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_basics() {
        let a = item_set(&[1, 2, 3]);
        let b = item_set(&[2, 3, 4]);
        assert_eq!(jaccard(&a, &b), 0.5);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &item_set(&[7, 8])), 0.0);
        assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
    }

    #[test]
    fn identical_pair_are_mutual_neighbors() {
        let sets = vec![vec![1, 2, 3], vec![1, 2, 3]];
        let idx = build_from_sets(&sets, NeighborConfig::default());
        assert_eq!(idx.lists[0], vec![Neighbor { id: 1, score: 1.0 }]);
        assert_eq!(idx.lists[1], vec![Neighbor { id: 0, score: 1.0 }]);
    }

    #[test]
    fn threshold_is_strict() {
        // |∩| = 1, |∪| = 10 → exactly 0.1, excluded
        let sets = vec![
            vec![0, 1, 2, 3, 4, 5],
            vec![5, 6, 7, 8, 9],
        ];
        let idx = build_from_sets(&sets, NeighborConfig::default());
        assert_eq!(jaccard(&item_set(&sets[0]), &item_set(&sets[1])), 0.1);
        assert!(idx.lists.iter().all(Vec::is_empty));
    }

    #[test]
    fn ties_prefer_lower_id_and_cap_applies() {
        let mut sets = vec![vec![0, 1]];
        for _ in 0..12 {
            sets.push(vec![0, 1]);
        }
        let idx = build_from_sets(&sets, NeighborConfig::default());
        let ids: Vec<usize> = idx.lists[0].iter().map(|n| n.id).collect();
        assert_eq!(ids, (1..=10).collect::<Vec<_>>());
        assert!(idx.lists[5].iter().all(|n| n.id != 5));
    }
}
