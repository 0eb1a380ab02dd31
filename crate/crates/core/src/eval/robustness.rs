use serde::{Deserialize, Serialize};

use super::metrics::MetricSet;
use super::{evaluate, InputView};
use crate::autodiff::{derive_seed, Rng};
use crate::corruption::{corrupt, CorruptionConfig};
use crate::data::{Corpus, Dataset, InteractionSequence, Split};
use crate::error::Result;
use crate::model::Model;
use crate::seeds;

/// Keep/delete/insert probabilities of the simulated-noise protocol.
pub const SIMULATED_NOISE: (f64, f64, f64) = (0.4, 0.3, 0.3);

/// Corrupts every sequence's history (all items but the test item) with
/// `noise`'s operation probabilities. The last history item is never
/// deleted, so the validation and test targets are unchanged.
pub fn simulate_noise(corpus: &Corpus, noise: &CorruptionConfig, seed: u64) -> Result<Corpus> {
    noise.validate()?;
    let tokens = corpus.tokens();
    let sequences = corpus
        .sequences
        .iter()
        .enumerate()
        .map(|(s, seq)| {
            let n = seq.items.len();
            let mut rng = Rng::new(derive_seed(seed, &[seeds::NOISE, s as u64]));
            let ex = corrupt(&seq.items[..n - 1], noise, tokens, &mut rng)?;
            let mut items = ex.corrupted;
            items.push(seq.test_item());
            InteractionSequence::new(seq.user.clone(), items)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        vocab: corpus.vocab.clone(),
        sequences,
    })
}

/// `(sum - sum_real) / sum_real`; 0 when both are 0.
pub fn dist(sum: f64, sum_real: f64) -> f64 {
    if sum == sum_real {
        0.0
    } else {
        (sum - sum_real) / sum_real
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub simulated: MetricSet,
    pub real: MetricSet,
    /// Real test set scored on raw histories, bypassing the modifier.
    pub real_raw: MetricSet,
    pub sum: f64,
    /// Real test set through the same input path as `sum`.
    pub sum_real: f64,
    pub dist: f64,
    pub sum_real_raw: f64,
    pub dist_vs_raw: f64,
}

/// Test-split metrics of `model` on the simulated and real datasets.
pub fn robustness_report(
    model: &Model,
    real: &Dataset,
    simulated: &Dataset,
    max_raw_len: usize,
) -> Result<RobustnessReport> {
    let sim = evaluate(model, simulated, Split::Test, InputView::Modified, max_raw_len)?.metrics;
    let re = evaluate(model, real, Split::Test, InputView::Modified, max_raw_len)?.metrics;
    let raw = evaluate(model, real, Split::Test, InputView::Raw, max_raw_len)?.metrics;
    Ok(RobustnessReport {
        simulated: sim,
        real: re,
        real_raw: raw,
        sum: sim.sum(),
        sum_real: re.sum(),
        dist: dist(sim.sum(), re.sum()),
        sum_real_raw: raw.sum(),
        dist_vs_raw: dist(sim.sum(), raw.sum()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_arithmetic() {
        assert!((dist(2.40, 2.50) + 0.04).abs() < 1e-12);
        assert_eq!(dist(1.5, 1.5), 0.0);
        assert_eq!(dist(0.0, 0.0), 0.0);
    }
}
