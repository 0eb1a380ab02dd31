use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{InputView, MetricSet, PrivacyReport, RobustnessReport};
use crate::data::Split;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: String,
    pub recommender: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub negatives: String,
    /// Full experiment configuration, echoed for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: RunMetadata,
    pub split: Split,
    pub view: InputView,
    pub metrics: MetricSet,
    pub sum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessReport>,
}

impl MetricsReport {
    pub fn new(metadata: RunMetadata, split: Split, view: InputView, metrics: MetricSet) -> Self {
        MetricsReport {
            metadata,
            split,
            view,
            sum: metrics.sum(),
            metrics,
            privacy: None,
            robustness: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable report");
        s.push('\n');
        s
    }

    /// Aligned two-column plain text.
    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let mut rows: Vec<(String, String)> = vec![
            ("mode".into(), m.mode.clone()),
            ("recommender".into(), m.recommender.clone()),
            ("seed".into(), m.seed.to_string()),
            ("checkpoint".into(), m.checkpoint.clone().unwrap_or_else(|| "-".into())),
            ("negatives".into(), m.negatives.clone()),
            ("split".into(), format!("{:?}", self.split).to_lowercase()),
            ("view".into(), format!("{:?}", self.view).to_lowercase()),
        ];
        for (name, v) in self.metrics.named() {
            rows.push((name.into(), format!("{v:.4}")));
        }
        rows.push(("Sum".into(), format!("{:.4}", self.sum)));
        if let Some(p) = &self.privacy {
            rows.push(("Similarity".into(), format!("{:.4}", p.similarity)));
            for (label, prop) in [("position", &p.per_position), ("item", &p.per_item)] {
                rows.push((format!("Keep ({label})"), format!("{:.4}", prop.keep)));
                rows.push((format!("Delete ({label})"), format!("{:.4}", prop.delete)));
                rows.push((format!("Insert ({label})"), format!("{:.4}", prop.insert)));
            }
        }
        if let Some(r) = &self.robustness {
            rows.push(("Sum (simulated)".into(), format!("{:.4}", r.sum)));
            rows.push(("Sum_real".into(), format!("{:.4}", r.sum_real)));
            rows.push(("dist".into(), format!("{:+.2}%", 100.0 * r.dist)));
            rows.push(("Sum_real (raw)".into(), format!("{:.4}", r.sum_real_raw)));
            rows.push(("dist (vs raw)".into(), format!("{:+.2}%", 100.0 * r.dist_vs_raw)));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}
