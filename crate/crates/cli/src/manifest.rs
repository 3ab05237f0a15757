//! Run manifest: everything needed to reproduce a run and check its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use runline_core::models::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::output::MANIFEST;

pub const TOOL: &str = "runline-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    /// Taken from `SOURCE_DATE_EPOCH`; the wall clock is never read so that
    /// equal runs stay byte-identical.
    pub source_date_epoch: Option<i64>,
}

impl Timestamps {
    pub fn from_env() -> Self {
        Timestamps {
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.trim().parse().ok()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Resolved pipeline configuration.
    pub config: serde_json::Value,
    /// Final configuration of each model, after any grid search.
    pub models: BTreeMap<String, ModelConfig>,
    pub seeds: BTreeMap<String, u64>,
    pub last_train_season: i32,
    /// SHA-256 per input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 per output file, relative to the run directory.
    pub outputs: BTreeMap<String, String>,
    pub timestamps: Timestamps,
}

impl RunManifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path).with_context(|| format!("no manifest at {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("cannot parse {}", path.display()))
    }

    /// Outputs whose file is missing or whose content no longer matches.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|(rel, digest)| {
                crate::output::sha256_file(&dir.join(rel)).map_or(true, |d| &d != *digest)
            })
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}
