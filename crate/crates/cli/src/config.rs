//! Configuration file handling.
//!
//! A config file is JSON with optional sections `cluster`, `cost`,
//! `policies`, `sample`, `run` and `recipe`. Missing fields take library defaults;
//! command-line flags are applied on top afterwards.

use std::path::Path;

use rlvr_core::generator::{Recipe, SampleSpec};
use rlvr_core::pipeline::RunMode;
use rlvr_core::simcore::{ClusterSpec, CostModel, Policies};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub mode: RunMode,
    pub max_staleness: u64,
    pub minibatches: usize,
    pub steps: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: RunMode::SyncColocated,
            max_staleness: 0,
            minibatches: 1,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub cluster: ClusterSpec,
    pub cost: CostModel,
    pub policies: Policies,
    /// Present when runs should draw sampled workloads.
    pub sample: Option<SampleSpec>,
    pub run: RunSection,
    /// Synthetic source used when no trace is given.
    pub recipe: Option<Recipe>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{}: invalid config: {e}", path.display())))
    }
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
