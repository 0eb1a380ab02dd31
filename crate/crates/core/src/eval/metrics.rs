use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CUTOFFS: [usize; 3] = [5, 10, 20];

/// `(HR@k, MRR@k)` over 1-based ranks.
pub fn hr_mrr(ranks: &[usize], k: usize) -> Result<(f64, f64)> {
    if ranks.is_empty() {
        return Err(Error::Data("no ranking results to score".into()));
    }
    if let Some(r) = ranks.iter().find(|&&r| r == 0) {
        return Err(Error::Data(format!("rank {r} is not 1-based")));
    }
    let n = ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r <= k).count() as f64;
    let rr: f64 = ranks.iter().filter(|&&r| r <= k).map(|&r| 1.0 / r as f64).sum();
    Ok((hits / n, rr / n))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub hr5: f64,
    pub hr10: f64,
    pub hr20: f64,
    pub mrr5: f64,
    pub mrr10: f64,
    pub mrr20: f64,
}

impl MetricSet {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let (hr5, mrr5) = hr_mrr(ranks, 5)?;
        let (hr10, mrr10) = hr_mrr(ranks, 10)?;
        let (hr20, mrr20) = hr_mrr(ranks, 20)?;
        Ok(MetricSet {
            hr5,
            hr10,
            hr20,
            mrr5,
            mrr10,
            mrr20,
        })
    }

    /// Total of the six metrics.
    pub fn sum(&self) -> f64 {
        self.hr5 + self.hr10 + self.hr20 + self.mrr5 + self.mrr10 + self.mrr20
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("HR@5", self.hr5),
            ("HR@10", self.hr10),
            ("HR@20", self.hr20),
            ("MRR@5", self.mrr5),
            ("MRR@10", self.mrr10),
            ("MRR@20", self.mrr20),
        ]
    }
}
