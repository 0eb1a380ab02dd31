//! Seeded synthetic interaction logs with planted cluster structure.
//!
//! Items are split into `n_clusters` contiguous blocks and each user belongs
//! to one cluster. A user's next item is drawn from an order-`markov_order`
//! chain: with probability `p_successor` the deterministic successor of the
//! current state (a hash of the last `markov_order` items, mapped into the
//! user's cluster), with `p_cluster` a uniform item of the cluster, otherwise
//! a uniform item of the whole catalogue. Users of the same cluster therefore
//! share most of their items.

use serde::{Deserialize, Serialize};

use super::events::Event;
use crate::autodiff::{derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub markov_order: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub p_successor: f64,
    pub p_cluster: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 200,
            n_items: 50,
            n_clusters: 4,
            markov_order: 1,
            min_len: 8,
            max_len: 14,
            p_successor: 0.6,
            p_cluster: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn with_size(n_users: usize, n_items: usize) -> Self {
        SyntheticConfig {
            n_users,
            n_items,
            ..Self::default()
        }
    }

    /// The item range `[start, end)` of a cluster.
    pub fn cluster_items(&self, cluster: usize) -> (usize, usize) {
        let per = self.n_items / self.n_clusters;
        let start = cluster * per;
        let end = if cluster + 1 == self.n_clusters {
            self.n_items
        } else {
            start + per
        };
        (start, end)
    }

    pub fn cluster_of_user(&self, user: usize) -> usize {
        user % self.n_clusters
    }
}

pub fn item_key(i: usize) -> String {
    format!("i{i}")
}

pub fn user_key(u: usize) -> String {
    format!("u{u}")
}

/// Generates events. Panics if `n_items < 20` or the cluster layout is
/// degenerate; both are caller bugs for a synthetic generator.
pub fn generate_synthetic_corpus(config: &SyntheticConfig, rng: &mut Rng) -> Vec<Event> {
    assert!(config.n_items >= 20, "synthetic corpus needs at least 20 items");
    assert!(
        config.n_clusters >= 1 && config.n_items / config.n_clusters >= 2,
        "each cluster needs at least two items"
    );
    assert!(config.markov_order >= 1 && config.min_len >= 1 && config.min_len <= config.max_len);
    let chain_seed = rng.below(usize::MAX) as u64;
    let mut events = Vec::new();
    let mut clock: i64 = 1_500_000_000;
    for u in 0..config.n_users {
        let cluster = config.cluster_of_user(u);
        let (lo, hi) = config.cluster_items(cluster);
        let len = config.min_len + rng.below(config.max_len - config.min_len + 1);
        let mut items: Vec<usize> = vec![lo + rng.below(hi - lo)];
        while items.len() < len {
            let u01 = rng.uniform();
            let next = if u01 < config.p_successor {
                let k = config.markov_order.min(items.len());
                let state: Vec<u64> = items[items.len() - k..].iter().map(|&i| i as u64).collect();
                lo + (derive_seed(chain_seed, &state) % (hi - lo) as u64) as usize
            } else if u01 < config.p_successor + config.p_cluster {
                lo + rng.below(hi - lo)
            } else {
                rng.below(config.n_items)
            };
            items.push(next);
        }
        let mut t = clock + rng.below(1000) as i64;
        for i in items {
            t += 1 + rng.below(3600) as i64;
            events.push(Event::new(user_key(u), item_key(i), t));
        }
        clock += 100;
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_deterministic() {
        let c = SyntheticConfig::default();
        let a = generate_synthetic_corpus(&c, &mut Rng::new(7));
        let b = generate_synthetic_corpus(&c, &mut Rng::new(7));
        assert_eq!(a, b);
        let other = generate_synthetic_corpus(&c, &mut Rng::new(8));
        assert_ne!(a, other);
    }

    #[test]
    fn per_user_times_increase() {
        let c = SyntheticConfig::with_size(20, 30);
        let ev = generate_synthetic_corpus(&c, &mut Rng::new(1));
        for w in ev.windows(2) {
            if w[0].user == w[1].user {
                assert!(w[1].time > w[0].time);
            }
        }
    }
}
