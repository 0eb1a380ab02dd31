//! Experiment configuration: one TOML or JSON file, overridden by flags.

use std::path::{Path, PathBuf};

use cloud_core::corruption::CorruptionConfig;
use cloud_core::data::{NegativeSpec, NeighborConfig, SyntheticConfig};
use cloud_core::io::hash_json;
use cloud_core::model::ModelConfig;
use cloud_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Raw `user<TAB>item<TAB>timestamp` log read by `preprocess`.
    pub events: Option<PathBuf>,
    /// Directory of preprocessed sequences, vocabulary and indexes.
    pub dir: PathBuf,
    pub start_time: Option<i64>,
    pub end_time: Option<i64>,
    pub min_count: usize,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            events: None,
            dir: PathBuf::from("data"),
            start_time: None,
            end_time: None,
            min_count: 5,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub negatives: NegativeSpec,
    pub data: DataConfig,
    pub neighbors: NeighborConfig,
    pub corruption: CorruptionConfig,
    /// `n_items` is taken from the data; the length limits must match
    /// `corruption`.
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            output_dir: PathBuf::from("runs"),
            negatives: NegativeSpec::default(),
            data: DataConfig::default(),
            neighbors: NeighborConfig::default(),
            corruption: CorruptionConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses by extension: `.toml` or `.json`.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Core(cloud_core::Error::io(path, e)))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => Err("config file must end in .toml or .json".to_string()),
        };
        parsed.map_err(|msg| CliError::ConfigFile {
            path: path.to_path_buf(),
            msg,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.corruption.validate()?;
        self.train.validate()?;
        if self.model.max_modified_len != self.corruption.max_modified_len
            || self.model.max_insert_run != self.corruption.max_insert_run
        {
            return Err(cloud_core::Error::Config(format!(
                "model length limits ({}, {}) differ from corruption limits ({}, {})",
                self.model.max_modified_len,
                self.model.max_insert_run,
                self.corruption.max_modified_len,
                self.corruption.max_insert_run
            ))
            .into());
        }
        if self.neighbors.max_neighbors == 0 {
            return Err(cloud_core::Error::Config("neighbors.max_neighbors must be positive".into()).into());
        }
        Ok(())
    }

    /// Model configuration for a catalogue of `n_items`.
    pub fn model_for(&self, n_items: usize) -> Result<ModelConfig, CliError> {
        let cfg = ModelConfig {
            n_items,
            ..self.model.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serialisable config")
    }
}
