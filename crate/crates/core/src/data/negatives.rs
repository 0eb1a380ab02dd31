use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sequences::InteractionSequence;
use super::vocab::ItemId;
use crate::autodiff::Rng;
use crate::error::Error;

/// How many un-interacted items are ranked against each held-out item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NegativeSpec {
    Count(usize),
    All,
}

impl Default for NegativeSpec {
    fn default() -> Self {
        NegativeSpec::Count(99)
    }
}

impl fmt::Display for NegativeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeSpec::Count(n) => write!(f, "{n}"),
            NegativeSpec::All => write!(f, "all"),
        }
    }
}

impl FromStr for NegativeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(NegativeSpec::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(NegativeSpec::Count(n)),
            _ => Err(Error::Config(format!(
                "negatives must be a positive integer or \"all\", got {s:?}"
            ))),
        }
    }
}

impl From<NegativeSpec> for String {
    fn from(s: NegativeSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for NegativeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Valid,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}; expected valid or test"))),
        }
    }
}

/// Frozen negatives per (sequence, held-out item).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub seq: usize,
    pub valid: Vec<ItemId>,
    pub test: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSamples {
    pub spec: NegativeSpec,
    pub records: Vec<NegativeRecord>,
}

fn interacted_mask(seq: &InteractionSequence, n_items: usize) -> Vec<bool> {
    let mut seen = vec![false; n_items];
    for &i in &seq.items {
        seen[i] = true;
    }
    seen
}

/// All items the user never interacted with, ascending.
pub fn uninteracted(seq: &InteractionSequence, n_items: usize) -> Vec<ItemId> {
    let seen = interacted_mask(seq, n_items);
    (0..n_items).filter(|&i| !seen[i]).collect()
}

fn sample_one(seq: &InteractionSequence, n_items: usize, count: usize, rng: &mut Rng) -> Vec<ItemId> {
    let mut pool = uninteracted(seq, n_items);
    if count >= pool.len() {
        return pool;
    }
    // partial Fisher-Yates over the un-interacted pool
    for i in 0..count {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    let mut out = pool[..count].to_vec();
    out.sort_unstable();
    out
}

/// Samples negatives for every sequence. With `Count(n)` each held-out item
/// gets `min(n, available)` distinct un-interacted items; with `All` nothing
/// is stored and candidates are enumerated on demand.
pub fn sample_negatives(
    sequences: &[InteractionSequence],
    n_items: usize,
    spec: NegativeSpec,
    seed: u64,
) -> NegativeSamples {
    let base = Rng::new(seed);
    let records = match spec {
        NegativeSpec::All => Vec::new(),
        NegativeSpec::Count(n) => sequences
            .iter()
            .enumerate()
            .map(|(sid, seq)| NegativeRecord {
                seq: sid,
                valid: sample_one(seq, n_items, n, &mut base.derive(&[sid as u64, 0])),
                test: sample_one(seq, n_items, n, &mut base.derive(&[sid as u64, 1])),
            })
            .collect(),
    };
    NegativeSamples { spec, records }
}

impl NegativeSamples {
    pub fn negatives(&self, seq_idx: usize, seq: &InteractionSequence, split: Split, n_items: usize) -> Vec<ItemId> {
        match self.spec {
            NegativeSpec::All => uninteracted(seq, n_items),
            NegativeSpec::Count(_) => {
                let r = &self.records[seq_idx];
                match split {
                    Split::Valid => r.valid.clone(),
                    Split::Test => r.test.clone(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs() -> Vec<InteractionSequence> {
        vec![
            InteractionSequence::new("a", vec![0, 1, 2, 3, 4]).unwrap(),
            InteractionSequence::new("b", vec![5, 6, 7, 8, 9, 10]).unwrap(),
        ]
    }

    #[test]
    fn never_samples_interacted_items() {
        let s = seqs();
        let neg = sample_negatives(&s, 40, NegativeSpec::Count(20), 3);
        for (r, seq) in neg.records.iter().zip(&s) {
            assert_eq!(r.valid.len(), 20);
            assert!(r.valid.iter().chain(&r.test).all(|&i| !seq.contains(i)));
            let mut d = r.test.clone();
            d.dedup();
            assert_eq!(d.len(), 20);
        }
        assert_eq!(neg, sample_negatives(&s, 40, NegativeSpec::Count(20), 3));
    }

    #[test]
    fn count_is_capped_by_availability() {
        let s = seqs();
        let neg = sample_negatives(&s, 12, NegativeSpec::Count(99), 1);
        assert_eq!(neg.records[0].test, (5..12).collect::<Vec<_>>());
    }

    #[test]
    fn all_enumerates_uninteracted() {
        let s = seqs();
        let neg = sample_negatives(&s, 12, NegativeSpec::All, 1);
        assert_eq!(neg.negatives(1, &s[1], Split::Test, 12), vec![0, 1, 2, 3, 4, 11]);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("all".parse::<NegativeSpec>().unwrap(), NegativeSpec::All);
        assert_eq!("99".parse::<NegativeSpec>().unwrap(), NegativeSpec::Count(99));
        assert!("0".parse::<NegativeSpec>().is_err());
        assert!("x".parse::<NegativeSpec>().is_err());
    }
}
