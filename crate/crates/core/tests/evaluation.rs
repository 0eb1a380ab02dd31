mod common;

use std::collections::HashSet;

use cloud_core::autodiff::{derive_seed, Rng};
use cloud_core::corruption::{corrupt, CorruptionConfig};
use cloud_core::data::{Dataset, NeighborConfig, NegativeSpec, Split};
use cloud_core::eval::{
    dist, evaluate, hr_mrr, modify_split, privacy_of_split, privacy_report, robustness_report, simulate_noise,
    split_input, InputView, MetricSet, SIMULATED_NOISE,
};
use cloud_core::io::sha256_hex;
use cloud_core::model::{pessimistic_rank, ModifierMode};
use cloud_core::seeds;
use proptest::prelude::*;

fn noise(p: (f64, f64, f64)) -> CorruptionConfig {
    CorruptionConfig::default().with_probs(p.0, p.1, p.2)
}

#[test]
fn identity_noise_gives_zero_dist() {
    let corpus = common::synthetic_corpus(7);
    let same = simulate_noise(&corpus, &noise((1.0, 0.0, 0.0)), 7).unwrap();
    assert_eq!(same, corpus);
    let real = Dataset::build(corpus, NeighborConfig::default(), NegativeSpec::default(), 7);
    let sim = Dataset::build(same, NeighborConfig::default(), NegativeSpec::default(), 7);
    let model = common::model_for(&real, ModifierMode::Cloud, 7);
    let report = robustness_report(&model, &real, &sim, 50).unwrap();
    assert_eq!(report.dist, 0.0);
    assert_eq!(report.sum, report.sum_real);
}

#[test]
fn simulated_noise_frequencies_match_the_protocol() {
    // the same corruption draws simulate_noise makes, over 10^5 positions
    let cfg = noise(SIMULATED_NOISE);
    let tokens = cloud_core::data::SpecialTokens { n_items: 50 };
    let mut counts = [0usize; 3];
    let mut total = 0;
    let mut s = 0u64;
    while total < 100_000 {
        let mut rng = Rng::new(derive_seed(11, &[seeds::NOISE, s]));
        let items: Vec<usize> = (0..12).map(|i| (i * 7 + s as usize) % 50).collect();
        let ex = corrupt(&items, &cfg, tokens, &mut rng).unwrap();
        for a in &ex.sampled_actions[..items.len() - 1] {
            counts[a.index()] += 1;
            total += 1;
        }
        s += 1;
    }
    let want = [SIMULATED_NOISE.0, SIMULATED_NOISE.1, SIMULATED_NOISE.2];
    for (c, w) in counts.iter().zip(want) {
        assert!((*c as f64 / total as f64 - w).abs() < 0.01);
    }
}

#[test]
fn simulated_dataset_replays_the_corruption_and_keeps_targets() {
    let corpus = common::synthetic_corpus(7);
    let cfg = noise(SIMULATED_NOISE);
    let sim = simulate_noise(&corpus, &cfg, 7).unwrap();
    for (s, (a, b)) in corpus.sequences.iter().zip(&sim.sequences).enumerate() {
        assert_eq!(a.user, b.user);
        assert_eq!(a.test_item(), b.test_item());
        assert_eq!(a.valid_item(), b.valid_item());
        let mut rng = Rng::new(derive_seed(7, &[seeds::NOISE, s as u64]));
        let ex = corrupt(&a.items[..a.items.len() - 1], &cfg, corpus.tokens(), &mut rng).unwrap();
        assert_eq!(&b.items[..b.items.len() - 1], ex.corrupted.as_slice());
    }
}

/// Frozen from a reference run.
#[test]
fn simulated_dataset_matches_golden_digest() {
    let corpus = common::synthetic_corpus(7);
    let sim = simulate_noise(&corpus, &noise(SIMULATED_NOISE), 7).unwrap();
    let digest = sha256_hex(serde_json::to_string(&sim.sequences).unwrap().as_bytes());
    assert_eq!(digest, GOLDEN_SIMULATED);
}

const GOLDEN_SIMULATED: &str = "7fd5d578544b07f11ba12bb8347f3f0ac1128c134945515ae75e52e667953a47";

#[test]
fn negatives_avoid_interacted_items_and_are_reproducible() {
    let a = common::synthetic_dataset(9);
    let b = common::synthetic_dataset(9);
    assert_eq!(a.negatives, b.negatives);
    for (s, seq) in a.sequences().iter().enumerate() {
        for split in [Split::Valid, Split::Test] {
            let negs = a.negatives.negatives(s, seq, split, a.n_items());
            let available = a.n_items() - seq.items.iter().collect::<HashSet<_>>().len();
            assert_eq!(negs.len(), available.min(99));
            assert_eq!(negs.iter().collect::<HashSet<_>>().len(), negs.len());
            assert!(negs.iter().all(|&n| !seq.contains(n) && n < a.n_items()));
        }
    }
    let all = Dataset::build(common::synthetic_corpus(9), NeighborConfig::default(), NegativeSpec::All, 9);
    let seq = &all.sequences()[0];
    let negs = all.negatives.negatives(0, seq, Split::Test, all.n_items());
    let distinct: HashSet<_> = seq.items.iter().collect();
    assert_eq!(negs.len(), all.n_items() - distinct.len());
}

#[test]
fn privacy_block_is_a_function_of_the_decodes() {
    let data = common::synthetic_dataset(10);
    let model = common::model_for(&data, ModifierMode::Cloud, 10);
    let modified = modify_split(&model, &data, Split::Test, 50).unwrap();
    let raw: Vec<&[usize]> = (0..data.sequences().len()).map(|s| split_input(&data, s, Split::Test, 50)).collect();
    let report = privacy_report(&raw, &modified).unwrap();
    assert_eq!(report, privacy_of_split(&model, &data, Split::Test, 50).unwrap());

    let mut sim = 0.0;
    let mut ops = [0usize; 3];
    for (r, m) in raw.iter().zip(&modified) {
        let a: HashSet<_> = r.iter().collect();
        let b: HashSet<_> = m.items.iter().collect();
        sim += a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
        for o in &m.operations {
            ops[o.index()] += 1;
        }
    }
    let n_ops: usize = ops.iter().sum();
    assert!((report.similarity - sim / raw.len() as f64).abs() < 1e-12);
    assert!((report.per_position.keep - ops[0] as f64 / n_ops as f64).abs() < 1e-12);
    assert!((report.per_position.insert - ops[2] as f64 / n_ops as f64).abs() < 1e-12);
    assert!((report.per_position.total() - 1.0).abs() < 1e-9);
    assert!((report.per_item.total() - 1.0).abs() < 1e-9);
}

#[test]
fn evaluation_is_deterministic_and_well_formed() {
    let data = common::synthetic_dataset(12);
    let model = common::model_for(&data, ModifierMode::Steam, 12);
    let a = evaluate(&model, &data, Split::Test, InputView::Modified, 50).unwrap();
    let b = evaluate(&model, &data, Split::Test, InputView::Modified, 50).unwrap();
    assert_eq!(a, b);
    for r in &a.results {
        assert_eq!(r.candidates.iter().collect::<HashSet<_>>().len(), r.candidates.len());
        assert!(r.rank >= 1 && r.rank <= r.candidates.len());
    }
    let raw = evaluate(&model, &data, Split::Test, InputView::Raw, 50).unwrap();
    assert!(raw.modified.is_none());
}

#[test]
fn hr_mrr_rejects_empty_input() {
    assert!(hr_mrr(&[], 5).is_err());
    assert!(MetricSet::from_ranks(&[]).is_err());
}

#[test]
fn dist_matches_worked_example() {
    assert!((dist(2.40, 2.50) - -0.04).abs() < 1e-12);
}

proptest! {
    #[test]
    fn metrics_are_monotone_in_k(ranks in prop::collection::vec(1usize..=100, 1..300)) {
        let m = MetricSet::from_ranks(&ranks).unwrap();
        prop_assert!(m.hr5 <= m.hr10 && m.hr10 <= m.hr20 && m.hr20 <= 1.0);
        prop_assert!(m.mrr5 <= m.mrr10 && m.mrr10 <= m.mrr20);
        prop_assert!(m.mrr5 <= m.hr5 && m.mrr10 <= m.hr10 && m.mrr20 <= m.hr20);
    }

    #[test]
    fn rank_is_invariant_under_increasing_transforms(
        scores in prop::collection::vec(-5.0f64..5.0, 2..100),
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        let f = |x: f64| (a * x + b).exp();
        let mapped: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
        prop_assert_eq!(pessimistic_rank(scores[0], &scores[1..]), pessimistic_rank(mapped[0], &mapped[1..]));
    }
}
