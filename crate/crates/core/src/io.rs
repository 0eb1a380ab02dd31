//! Versioned JSON and JSON-lines files.
//!
//! Every file starts with (JSON-lines) or contains (JSON) a header carrying
//! `format_version`, the file `kind`, an optional `config_hash`, and the
//! SHA-256 of the payload (`content_sha256`), which is checked on read.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub format_version: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub content_sha256: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl FileHeader {
    pub fn new(kind: &str) -> Self {
        FileHeader {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            config_hash: None,
            content_sha256: String::new(),
            meta: serde_json::Map::new(),
        }
    }

    pub fn with_config_hash(mut self, hash: Option<&str>) -> Self {
        self.config_hash = hash.map(str::to_string);
        self
    }

    pub fn with_meta(mut self, key: &str, value: serde_json::Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable value");
    sha256_hex(&bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, header: &FileHeader, kind: &str) -> Result<()> {
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if header.kind != kind {
        return Err(Error::Data(format!(
            "{}: expected a {kind} file, found {}",
            path.display(),
            header.kind
        )));
    }
    Ok(())
}

pub fn to_jsonl_string<T: Serialize>(mut header: FileHeader, records: &[T]) -> String {
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("serialisable record"));
        body.push('\n');
    }
    header.content_sha256 = sha256_hex(body.as_bytes());
    let mut out = serde_json::to_string(&header).expect("serialisable header");
    out.push('\n');
    out.push_str(&body);
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: FileHeader, records: &[T]) -> Result<()> {
    write_bytes(path, to_jsonl_string(header, records).as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(FileHeader, Vec<T>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let header: FileHeader = serde_json::from_str(first).map_err(|e| Error::json(path, e))?;
    check_header(path, &header, kind)?;
    if sha256_hex(body.as_bytes()) != header.content_sha256 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            msg: "content checksum mismatch".into(),
        });
    }
    let records = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect::<Result<Vec<T>>>()?;
    Ok((header, records))
}

#[derive(Serialize, Deserialize)]
struct JsonEnvelope<T> {
    #[serde(flatten)]
    header: FileHeader,
    data: T,
}

pub fn to_json_string<T: Serialize>(mut header: FileHeader, data: &T) -> String {
    header.content_sha256 = hash_json(data);
    let env = JsonEnvelope { header, data };
    let mut s = serde_json::to_string_pretty(&env).expect("serialisable document");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, header: FileHeader, data: &T) -> Result<()> {
    write_bytes(path, to_json_string(header, data).as_bytes())
}

pub fn read_json<T: DeserializeOwned + Serialize>(path: &Path, kind: &str) -> Result<(FileHeader, T)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: JsonEnvelope<T> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    check_header(path, &env.header, kind)?;
    if hash_json(&env.data) != env.header.content_sha256 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            msg: "content checksum mismatch".into(),
        });
    }
    Ok((env.header, env.data))
}
