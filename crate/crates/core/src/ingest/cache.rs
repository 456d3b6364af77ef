//! Stage output cache.
//!
//! One JSON file per stage. The payload is stored as a string alongside its
//! SHA-256 checksum and the config hash it was computed under; a read with a
//! different hash is a hard "stale cache" error, never a silent reuse.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CacheError;

#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    stage: String,
    config_hash: String,
    checksum: String,
    payload: String,
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CacheStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.json"))
    }

    pub fn contains(&self, stage: &str) -> bool {
        self.path_for(stage).exists()
    }

    pub fn write<T: Serialize>(
        &self,
        stage: &str,
        config_hash: &str,
        payload: &T,
    ) -> Result<(), CacheError> {
        fs::create_dir_all(&self.dir).map_err(|e| CacheError::Io {
            path: self.dir.clone(),
            source: e,
        })?;
        let payload_json = serde_json::to_string(payload).map_err(|e| CacheError::Malformed {
            stage: stage.to_string(),
            msg: format!("payload not serializable: {e}"),
        })?;
        let envelope = Envelope {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            checksum: checksum(payload_json.as_bytes()),
            payload: payload_json,
        };
        let path = self.path_for(stage);
        let body = serde_json::to_string(&envelope).expect("envelope is serializable");
        fs::write(&path, body).map_err(|e| CacheError::Io { path, source: e })
    }

    pub fn read<T: DeserializeOwned>(
        &self,
        stage: &str,
        expected_hash: &str,
    ) -> Result<T, CacheError> {
        let path = self.path_for(stage);
        if !path.exists() {
            return Err(CacheError::Missing {
                stage: stage.to_string(),
            });
        }
        let body = fs::read_to_string(&path).map_err(|e| CacheError::Io { path, source: e })?;
        let envelope: Envelope =
            serde_json::from_str(&body).map_err(|e| CacheError::Malformed {
                stage: stage.to_string(),
                msg: e.to_string(),
            })?;
        if envelope.config_hash != expected_hash {
            return Err(CacheError::Stale {
                stage: stage.to_string(),
                found: envelope.config_hash,
                expected: expected_hash.to_string(),
            });
        }
        if checksum(envelope.payload.as_bytes()) != envelope.checksum {
            return Err(CacheError::Checksum {
                stage: stage.to_string(),
            });
        }
        serde_json::from_str(&envelope.payload).map_err(|e| CacheError::Malformed {
            stage: stage.to_string(),
            msg: e.to_string(),
        })
    }
}
