//! Raw logs → filtered events → per-user sequences, item vocabulary,
//! similar-sequence index and frozen evaluation negatives.

pub mod events;
pub mod negatives;
pub mod neighbors;
pub mod sequences;
pub mod synthetic;
pub mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use events::{five_core_filter, filter_time_range, k_core_filter, parse_tsv, read_tsv, Event};
pub use negatives::{sample_negatives, NegativeSamples, NegativeSpec, Split};
pub use neighbors::{build_from_sets, build_neighbor_index, item_set, jaccard, Neighbor, NeighborConfig, NeighborIndex};
pub use sequences::{build_sequences, BuildStats, InteractionSequence, DEFAULT_MAX_RAW_LEN};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};
pub use vocab::{ItemId, ItemVocabulary, SpecialTokens};

use crate::autodiff::derive_seed;
use crate::error::{Error, Result};
use crate::seeds;
use crate::io::{self, FileHeader};

pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const NEIGHBORS_FILE: &str = "neighbors.jsonl";
pub const NEGATIVES_FILE: &str = "negatives.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NeighborRecord {
    seq: usize,
    neighbors: Vec<Neighbor>,
}

/// Preprocessed sequences and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: ItemVocabulary,
    pub sequences: Vec<InteractionSequence>,
}

impl Corpus {
    pub fn tokens(&self) -> SpecialTokens {
        self.vocab.tokens()
    }

    pub fn from_events(events: &[Event], max_raw_len: usize) -> Result<(Self, BuildStats)> {
        let (sequences, vocab, stats) = build_sequences(events, max_raw_len)?;
        Ok((Corpus { vocab, sequences }, stats))
    }

    pub fn save(&self, dir: &Path, config_hash: Option<&str>) -> Result<()> {
        io::write_jsonl(
            &dir.join(SEQUENCES_FILE),
            FileHeader::new("sequences").with_config_hash(config_hash),
            &self.sequences,
        )?;
        io::write_json(
            &dir.join(VOCAB_FILE),
            FileHeader::new("vocab").with_config_hash(config_hash),
            &self.vocab.keys(),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (_, sequences): (_, Vec<InteractionSequence>) =
            io::read_jsonl(&dir.join(SEQUENCES_FILE), "sequences")?;
        let (_, keys): (_, Vec<String>) = io::read_json(&dir.join(VOCAB_FILE), "vocab")?;
        let mut vocab = ItemVocabulary::from_keys(keys);
        vocab.reindex();
        let n = vocab.n_items();
        for s in &sequences {
            if s.items.len() < 3 {
                return Err(Error::Data(format!("user {} has fewer than 3 items", s.user)));
            }
            if let Some(&bad) = s.items.iter().find(|&&i| i >= n) {
                return Err(Error::Data(format!(
                    "user {} references item id {bad} outside the vocabulary of {n}",
                    s.user
                )));
            }
        }
        Ok(Corpus { vocab, sequences })
    }
}

pub fn save_neighbors(path: &Path, index: &NeighborIndex, config_hash: Option<&str>) -> Result<()> {
    let recs: Vec<NeighborRecord> = index
        .lists
        .iter()
        .enumerate()
        .map(|(seq, n)| NeighborRecord {
            seq,
            neighbors: n.clone(),
        })
        .collect();
    io::write_jsonl(path, FileHeader::new("neighbors").with_config_hash(config_hash), &recs)
}

pub fn load_neighbors(path: &Path, n_sequences: usize) -> Result<NeighborIndex> {
    let (_, recs): (_, Vec<NeighborRecord>) = io::read_jsonl(path, "neighbors")?;
    if recs.len() != n_sequences || recs.iter().enumerate().any(|(i, r)| r.seq != i) {
        return Err(Error::Data(format!(
            "{}: neighbor index does not match {n_sequences} sequences",
            path.display()
        )));
    }
    Ok(NeighborIndex {
        lists: recs.into_iter().map(|r| r.neighbors).collect(),
    })
}

pub fn save_negatives(path: &Path, neg: &NegativeSamples, config_hash: Option<&str>) -> Result<()> {
    let header = FileHeader::new("negatives")
        .with_config_hash(config_hash)
        .with_meta("spec", serde_json::Value::String(neg.spec.to_string()));
    io::write_jsonl(path, header, &neg.records)
}

pub fn load_negatives(path: &Path, n_sequences: usize) -> Result<NegativeSamples> {
    let (header, records): (_, Vec<negatives::NegativeRecord>) = io::read_jsonl(path, "negatives")?;
    let spec: NegativeSpec = header
        .meta
        .get("spec")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Data(format!("{}: missing negative spec", path.display())))?
        .parse()?;
    if matches!(spec, NegativeSpec::Count(_)) && records.len() != n_sequences {
        return Err(Error::Data(format!(
            "{}: {} negative records for {n_sequences} sequences",
            path.display(),
            records.len()
        )));
    }
    Ok(NegativeSamples { spec, records })
}

/// Everything training and evaluation need.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub neighbors: NeighborIndex,
    pub negatives: NegativeSamples,
}

impl Dataset {
    /// Builds the neighbor index and samples negatives from the global seed.
    pub fn build(corpus: Corpus, neighbor_config: NeighborConfig, negatives: NegativeSpec, seed: u64) -> Self {
        let neighbors = build_neighbor_index(&corpus.sequences, neighbor_config);
        let seed = derive_seed(seed, &[seeds::NEGATIVES]);
        let negatives = sample_negatives(&corpus.sequences, corpus.vocab.n_items(), negatives, seed);
        Dataset {
            corpus,
            neighbors,
            negatives,
        }
    }

    pub fn tokens(&self) -> SpecialTokens {
        self.corpus.tokens()
    }

    pub fn n_items(&self) -> usize {
        self.corpus.vocab.n_items()
    }

    pub fn sequences(&self) -> &[InteractionSequence] {
        &self.corpus.sequences
    }

    pub fn save(&self, dir: &Path, config_hash: Option<&str>) -> Result<()> {
        self.corpus.save(dir, config_hash)?;
        save_neighbors(&dir.join(NEIGHBORS_FILE), &self.neighbors, config_hash)?;
        save_negatives(&dir.join(NEGATIVES_FILE), &self.negatives, config_hash)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let corpus = Corpus::load(dir)?;
        let n = corpus.sequences.len();
        let neighbors = load_neighbors(&dir.join(NEIGHBORS_FILE), n)?;
        let negatives = load_negatives(&dir.join(NEGATIVES_FILE), n)?;
        Ok(Dataset {
            corpus,
            neighbors,
            negatives,
        })
    }

    /// The sequences `k` neighbors of `seq` are built from: their training
    /// items, capped to the most recent `max_len`.
    pub fn neighbor_items(&self, seq: usize, max_len: usize) -> Vec<&[ItemId]> {
        self.neighbors
            .neighbors(seq)
            .iter()
            .map(|n| self.corpus.sequences[n.id].valid_input(max_len))
            .collect()
    }
}
