use cloud_core::autodiff::Rng;
use cloud_core::corruption::{
    corrupt, mask_for_recommender, reconstruct, CorruptionConfig, CorruptionExample, MaskPolicy, OperationLabel,
};
use cloud_core::data::SpecialTokens;
use proptest::prelude::*;

const TOKENS: SpecialTokens = SpecialTokens { n_items: 40 };

/// Walks the corrupted sequence directly: survivors are the non-Delete
/// positions, and each Insert anchor is preceded by its reversed target.
fn undo(ex: &CorruptionExample) -> Vec<usize> {
    let mut out = Vec::new();
    for p in 0..ex.corrupted.len() {
        if ex.labels[p] == OperationLabel::Delete {
            continue;
        }
        if let Some(target) = ex.insert_targets.get(&p) {
            let (eos, body) = target.split_last().unwrap();
            assert_eq!(*eos, TOKENS.eos());
            out.extend(body.iter().rev());
        }
        out.push(ex.corrupted[p]);
    }
    out
}

fn check_example(raw: &[usize], ex: &CorruptionExample, cfg: &CorruptionConfig) {
    assert_eq!(undo(ex), ex.raw);
    assert_eq!(reconstruct(ex, TOKENS), ex.raw);
    assert!(raw.ends_with(&ex.raw), "restorable part must be a suffix of the input");
    assert_eq!(ex.corrupted.len(), ex.labels.len());
    assert!(ex.corrupted.len() <= cfg.max_modified_len);
    assert_eq!(ex.corrupted.last(), raw.last());
    assert_ne!(*ex.labels.last().unwrap(), OperationLabel::Delete);
    for (&p, target) in &ex.insert_targets {
        assert_eq!(ex.labels[p], OperationLabel::Insert);
        assert!(target.len() >= 2 && target.len() <= cfg.max_insert_run + 1);
    }
    let anchors = ex.labels.iter().filter(|&&l| l == OperationLabel::Insert).count();
    assert_eq!(anchors, ex.insert_targets.len());
    assert_eq!(ex.sampled_actions.len(), raw.len());
}

#[test]
fn ten_thousand_corruptions_reconstruct_exactly() {
    let cfg = CorruptionConfig::default();
    let mut rng = Rng::new(1);
    let mut counts = [0usize; 3];
    let mut interior = 0usize;
    let mut clipped = 0;
    for _ in 0..10_000 {
        let len = 2 + rng.below(49);
        let raw: Vec<usize> = (0..len).map(|_| rng.below(TOKENS.n_items)).collect();
        let ex = corrupt(&raw, &cfg, TOKENS, &mut rng).unwrap();
        check_example(&raw, &ex, &cfg);
        clipped += usize::from(ex.raw.len() < raw.len());
        for a in &ex.sampled_actions[..len - 1] {
            counts[a.index()] += 1;
            interior += 1;
        }
    }
    assert!(clipped > 0, "clipping path never exercised");
    let want = [cfg.p_keep, cfg.p_delete, cfg.p_insert];
    for (c, w) in counts.iter().zip(want) {
        let f = *c as f64 / interior as f64;
        assert!((f - w).abs() < 0.01, "frequency {f} vs {w}");
    }
}

#[test]
fn identity_probabilities_leave_the_sequence_untouched() {
    let cfg = CorruptionConfig::default().with_probs(1.0, 0.0, 0.0);
    let raw = [5, 3, 3, 9];
    let ex = corrupt(&raw, &cfg, TOKENS, &mut Rng::new(4)).unwrap();
    assert_eq!(ex.corrupted, raw);
    assert!(ex.labels.iter().all(|&l| l == OperationLabel::Keep));
}

#[test]
fn corruption_is_deterministic_under_seed() {
    let cfg = CorruptionConfig::default();
    let raw: Vec<usize> = (0..30).map(|i| i % 40).collect();
    let a = corrupt(&raw, &cfg, TOKENS, &mut Rng::new(8)).unwrap();
    let b = corrupt(&raw, &cfg, TOKENS, &mut Rng::new(8)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn any_corruption_is_reversible(
        raw in prop::collection::vec(0usize..40, 2..70),
        keep in 0.0f64..1.0,
        split in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let delete = (1.0 - keep) * split;
        let cfg = CorruptionConfig::default().with_probs(keep, delete, 1.0 - keep - delete);
        let raw = &raw[raw.len().saturating_sub(cfg.max_raw_len)..];
        let ex = corrupt(raw, &cfg, TOKENS, &mut Rng::new(seed)).unwrap();
        check_example(raw, &ex, &cfg);
    }

    #[test]
    fn masking_hides_exactly_the_listed_positions(
        seq in prop::collection::vec(0usize..40, 1..50),
        p in 0.0f64..1.0,
        last_only in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let policy = if last_only { MaskPolicy::LastOnly } else { MaskPolicy::Random };
        let m = mask_for_recommender(&seq, p, policy, TOKENS, &mut Rng::new(seed)).unwrap();
        prop_assert!(!m.positions.is_empty());
        if last_only {
            prop_assert_eq!(&m.positions, &vec![seq.len() - 1]);
        }
        for (t, (&tok, &orig)) in m.tokens.iter().zip(&seq).enumerate() {
            match m.positions.iter().position(|&q| q == t) {
                Some(k) => {
                    prop_assert_eq!(tok, TOKENS.mask());
                    prop_assert_eq!(m.targets[k], orig);
                }
                None => prop_assert_eq!(tok, orig),
            }
        }
    }
}
