//! Ranking metrics, privacy metrics, simulated-noise robustness, reports.

pub mod metrics;
pub mod privacy;
pub mod report;
pub mod robustness;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{hr_mrr, MetricSet, CUTOFFS};
pub use privacy::{privacy_report, PrivacyReport, Proportions};
pub use report::{MetricsReport, RunMetadata};
pub use robustness::{dist, robustness_report, simulate_noise, RobustnessReport, SIMULATED_NOISE};

use crate::data::{Dataset, ItemId, Split};
use crate::error::Result;
use crate::model::{ModifiedSequence, Model, RankingResult};

/// What the recommender reads: the modifier's output or the raw history.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputView {
    #[default]
    Modified,
    Raw,
}

impl std::str::FromStr for InputView {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "modified" => Ok(InputView::Modified),
            "raw" => Ok(InputView::Raw),
            _ => Err(crate::Error::Config(format!("unknown view {s:?}; expected modified or raw"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<RankingResult>,
    pub metrics: MetricSet,
    /// Decodes of the split inputs; `None` for the raw view.
    pub modified: Option<Vec<ModifiedSequence>>,
}

/// History fed to the model for `split`: the most recent `max_raw_len`
/// items before the target.
pub fn split_input(data: &Dataset, seq: usize, split: Split, max_raw_len: usize) -> &[ItemId] {
    let s = &data.sequences()[seq];
    match split {
        Split::Valid => s.valid_input(max_raw_len),
        Split::Test => s.test_input(max_raw_len),
    }
}

fn split_target(data: &Dataset, seq: usize, split: Split) -> ItemId {
    let s = &data.sequences()[seq];
    match split {
        Split::Valid => s.valid_item(),
        Split::Test => s.test_item(),
    }
}

/// Decodes each split input with the modifier (in eval mode).
pub fn modify_split(model: &Model, data: &Dataset, split: Split, max_raw_len: usize) -> Result<Vec<ModifiedSequence>> {
    (0..data.sequences().len())
        .into_par_iter()
        .map(|s| {
            let neighbors = data.neighbor_items(s, max_raw_len);
            model.modify(split_input(data, s, split, max_raw_len), &neighbors)
        })
        .collect()
}

/// Ranks every sequence's held-out item against its frozen negatives.
pub fn evaluate(model: &Model, data: &Dataset, split: Split, view: InputView, max_raw_len: usize) -> Result<Evaluation> {
    let modified = match view {
        InputView::Modified => Some(modify_split(model, data, split, max_raw_len)?),
        InputView::Raw => None,
    };
    let results: Vec<RankingResult> = (0..data.sequences().len())
        .into_par_iter()
        .map(|s| {
            let seq = &data.sequences()[s];
            let input = match &modified {
                Some(m) => m[s].items.as_slice(),
                None => split_input(data, s, split, max_raw_len),
            };
            let negatives = data.negatives.negatives(s, seq, split, data.n_items());
            model.score_next_item(input, split_target(data, s, split), &negatives, &seq.items)
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = results.iter().map(|r| r.rank).collect();
    Ok(Evaluation {
        metrics: MetricSet::from_ranks(&ranks)?,
        results,
        modified,
    })
}

/// Privacy block over the decodes of the test inputs.
pub fn privacy_of_split(model: &Model, data: &Dataset, split: Split, max_raw_len: usize) -> Result<PrivacyReport> {
    let modified = modify_split(model, data, split, max_raw_len)?;
    let raw: Vec<&[ItemId]> = (0..data.sequences().len())
        .map(|s| split_input(data, s, split, max_raw_len))
        .collect();
    privacy_report(&raw, &modified)
}
