use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};

/// Which modifier components are active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierMode {
    /// Shared representation and copy mechanism.
    #[default]
    Cloud,
    /// No copy mechanism.
    Variant1,
    /// No shared representation.
    Variant2,
    /// Neither.
    Steam,
}

impl ModifierMode {
    pub const ALL: [ModifierMode; 4] = [
        ModifierMode::Cloud,
        ModifierMode::Variant1,
        ModifierMode::Variant2,
        ModifierMode::Steam,
    ];

    pub fn shared_representation(self) -> bool {
        matches!(self, ModifierMode::Cloud | ModifierMode::Variant1)
    }

    pub fn copy_mechanism(self) -> bool {
        matches!(self, ModifierMode::Cloud | ModifierMode::Variant2)
    }

    pub fn uses_neighbors(self) -> bool {
        self.shared_representation() || self.copy_mechanism()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModifierMode::Cloud => "cloud",
            ModifierMode::Variant1 => "variant1",
            ModifierMode::Variant2 => "variant2",
            ModifierMode::Steam => "steam",
        }
    }
}

impl fmt::Display for ModifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModifierMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown modifier mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directionality {
    #[default]
    Bi,
    Uni,
}

impl FromStr for Directionality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bi" => Ok(Directionality::Bi),
            "uni" => Ok(Directionality::Uni),
            _ => Err(Error::Config(format!("unknown recommender directionality {s:?}"))),
        }
    }
}

impl fmt::Display for Directionality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Directionality::Bi => "bi",
            Directionality::Uni => "uni",
        })
    }
}

/// Where the reverse generator's anchor row comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSource {
    /// The encoder output of the anchor item.
    #[default]
    Encoder,
    /// The shared representation row (same as `Encoder` without it).
    Shared,
}

/// `n_items` is filled from the data when left at 0 in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_items: usize,
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub generator_layers: usize,
    pub recommender_layers: usize,
    pub ffn_mult: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub max_modified_len: usize,
    pub max_insert_run: usize,
    pub mode: ModifierMode,
    pub anchor: AnchorSource,
    pub recommender: Directionality,
    /// Fixed `(P(I^col), P(I^all))` replacing the learned copy gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_override: Option<[f64; 2]>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(0)
    }
}

impl ModelConfig {
    pub fn new(n_items: usize) -> Self {
        ModelConfig {
            n_items,
            dim: 64,
            heads: 1,
            encoder_layers: 1,
            generator_layers: 1,
            recommender_layers: 1,
            ffn_mult: 4,
            dropout: 0.5,
            activation: Activation::Gelu,
            max_modified_len: 60,
            max_insert_run: 5,
            mode: ModifierMode::Cloud,
            anchor: AnchorSource::Encoder,
            recommender: Directionality::Bi,
            gate_override: None,
        }
    }

    /// Position table rows: room for a full modified sequence plus the
    /// appended evaluation `[mask]`.
    pub fn max_positions(&self) -> usize {
        self.max_modified_len + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::Config("model needs at least one item".into()));
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.ffn_mult == 0 || self.max_modified_len == 0 || self.max_insert_run == 0 {
            return Err(Error::Config("ffn_mult and length limits must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} out of [0,1)", self.dropout)));
        }
        if self.max_insert_run + 1 > self.max_positions() {
            return Err(Error::Config("position table too short for an insertion run".into()));
        }
        if let Some(g) = self.gate_override {
            if g.iter().any(|v| !(0.0..=1.0).contains(v)) || (g[0] + g[1] - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("gate override {g:?} is not a distribution")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_flags() {
        use ModifierMode::*;
        assert!(Cloud.shared_representation() && Cloud.copy_mechanism());
        assert!(Variant1.shared_representation() && !Variant1.copy_mechanism());
        assert!(!Variant2.shared_representation() && Variant2.copy_mechanism());
        assert!(!Steam.uses_neighbors());
        assert_eq!("STEAM".parse::<ModifierMode>().unwrap(), Steam);
        assert!("other".parse::<ModifierMode>().is_err());
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::new(10).validate().is_ok());
        let mut c = ModelConfig::new(10);
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(10);
        c.gate_override = Some([0.5, 0.6]);
        assert!(c.validate().is_err());
    }
}
