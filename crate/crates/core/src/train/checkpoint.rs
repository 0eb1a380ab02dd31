//! Checkpoints: a JSON manifest plus a little-endian f64 blob holding each
//! parameter's values and Adam moments, in store order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::RNG_ALGORITHM;
use crate::error::{Error, Result};
use crate::io::{self, FileHeader};
use crate::model::{Model, ModelConfig};

pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "params.bin";
const KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub rng_algorithm: String,
    pub blob: String,
    pub blob_sha256: String,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub epoch: usize,
    pub config_hash: Option<String>,
}

fn blob_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.params.num_values() * 24);
    for (_, p) in model.params.iter() {
        for part in [&p.tensor.data, &p.adam_m, &p.adam_v] {
            for v in part.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Writes `checkpoint.json` and `params.bin` under `dir`. Saving the same
/// state twice yields identical bytes.
pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    seed: u64,
    epoch: usize,
    config_hash: Option<&str>,
) -> Result<()> {
    let blob = blob_bytes(model);
    let manifest = CheckpointManifest {
        model: model.config.clone(),
        seed,
        epoch,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        blob: BLOB_FILE.to_string(),
        blob_sha256: io::sha256_hex(&blob),
        params: model
            .params
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape.clone(),
                step_count: p.step_count,
            })
            .collect(),
    };
    io::write_bytes(&dir.join(BLOB_FILE), &blob)?;
    io::write_json(
        &dir.join(MANIFEST_FILE),
        FileHeader::new(KIND).with_config_hash(config_hash),
        &manifest,
    )
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let (header, manifest): (_, CheckpointManifest) = io::read_json(&manifest_path, KIND)?;
    if manifest.rng_algorithm != RNG_ALGORITHM {
        return Err(Error::Integrity {
            path: manifest_path,
            msg: format!(
                "checkpoint uses RNG {}, this build uses {RNG_ALGORITHM}",
                manifest.rng_algorithm
            ),
        });
    }
    let blob_path = dir.join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if io::sha256_hex(&blob) != manifest.blob_sha256 {
        return Err(Error::Integrity {
            path: blob_path,
            msg: "parameter blob checksum mismatch".into(),
        });
    }
    let mut model = Model::new(manifest.model.clone(), manifest.seed)?;
    let integrity = |msg: String| Error::Integrity {
        path: manifest_path.clone(),
        msg,
    };
    if model.params.len() != manifest.params.len() {
        return Err(integrity(format!(
            "{} parameters recorded, model has {}",
            manifest.params.len(),
            model.params.len()
        )));
    }
    let expected_bytes = model.params.num_values() * 24;
    if blob.len() != expected_bytes {
        return Err(integrity(format!(
            "blob holds {} bytes, expected {expected_bytes}",
            blob.len()
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for ((_, p), entry) in model.params.iter_mut().zip(&manifest.params) {
        if p.name != entry.name || p.tensor.shape != entry.shape {
            return Err(integrity(format!(
                "parameter {} {:?} does not match recorded {} {:?}",
                p.name, p.tensor.shape, entry.name, entry.shape
            )));
        }
        p.step_count = entry.step_count;
        for part in [&mut p.tensor.data, &mut p.adam_m, &mut p.adam_v] {
            for v in part.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
    }
    Ok(Checkpoint {
        model,
        seed: manifest.seed,
        epoch: manifest.epoch,
        config_hash: header.config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> Model {
        let mut cfg = ModelConfig::new(12);
        cfg.dim = 8;
        let mut m = Model::new(cfg, 3).unwrap();
        for (i, (_, p)) in m.params.iter_mut().enumerate() {
            p.step_count = i as u64;
            p.adam_m.iter_mut().for_each(|v| *v = 0.25);
            p.adam_v.iter_mut().for_each(|v| *v = 1e-3);
        }
        m
    }

    #[test]
    fn round_trip_is_exact_and_resave_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = small_model();
        save_checkpoint(a.path(), &m, 3, 7, Some("h")).unwrap();
        let ck = load_checkpoint(a.path()).unwrap();
        assert_eq!(ck.model.params, m.params);
        assert_eq!((ck.seed, ck.epoch, ck.config_hash.as_deref()), (3, 7, Some("h")));
        save_checkpoint(b.path(), &ck.model, 3, 7, Some("h")).unwrap();
        for f in [MANIFEST_FILE, BLOB_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn corrupted_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &small_model(), 3, 1, None).unwrap();
        let path = dir.path().join(BLOB_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Integrity { .. })));
    }

    #[test]
    fn future_format_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &small_model(), 3, 1, None).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Version { found: 2, .. })));
    }
}
