//! Output directory bookkeeping, content digests and record-style JSON for
//! the core types that only have CSV writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use runline_core::features::FeatureMatrix;
use runline_core::models::PredictionSet;
use runline_core::Real;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Files written under one root, with their digests keyed by relative path.
#[derive(Debug)]
pub struct OutputTree {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputTree {
    /// Creates `root`. A directory that already holds files is only reused
    /// when it holds a previous run; that run's files are removed first.
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        if root.exists() {
            clear_previous_run(root)?;
        }
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutputTree {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.written
    }

    pub fn bytes(&mut self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn csv(
        &mut self,
        rel: &str,
        write: impl FnOnce(&mut Vec<u8>) -> runline_core::Result<()>,
    ) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.bytes(rel, &buf)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> anyhow::Result<()> {
        self.bytes(rel, &to_json(value)?)
    }

    /// `<stem>.csv` and `<stem>.json`.
    pub fn table<T: Serialize + ?Sized>(
        &mut self,
        stem: &str,
        write: impl FnOnce(&mut Vec<u8>) -> runline_core::Result<()>,
        value: &T,
    ) -> anyhow::Result<()> {
        self.csv(&format!("{stem}.csv"), write)?;
        self.json(&format!("{stem}.json"), value)
    }
}

fn clear_previous_run(root: &Path) -> anyhow::Result<()> {
    let mut entries = fs::read_dir(root).with_context(|| format!("cannot list {}", root.display()))?;
    if entries.next().is_none() {
        return Ok(());
    }
    let manifest = root.join(MANIFEST);
    if !manifest.is_file() {
        bail!(
            "output directory {} is not empty and holds no previous run; refusing to write into it",
            root.display()
        );
    }
    let previous: crate::manifest::RunManifest = serde_json::from_slice(&fs::read(&manifest)?)
        .with_context(|| format!("cannot parse {}", manifest.display()))?;
    for rel in previous.outputs.keys() {
        let path = root.join(rel);
        if path.is_file() {
            fs::remove_file(&path).with_context(|| format!("cannot remove {}", path.display()))?;
        }
    }
    fs::remove_file(&manifest)?;
    Ok(())
}

#[derive(Serialize)]
pub struct PredictionRecord<'a> {
    pub game_id: &'a str,
    pub model: &'a str,
    pub p_home: f64,
    pub label: bool,
    pub score_diff: i32,
}

pub fn prediction_records<F: Real>(p: &PredictionSet<F>) -> Vec<PredictionRecord<'_>> {
    (0..p.len())
        .map(|i| PredictionRecord {
            game_id: &p.game_ids()[i],
            model: p.model_name(),
            p_home: p.p_home()[i].f64(),
            label: p.labels()[i],
            score_diff: p.score_diff()[i],
        })
        .collect()
}

#[derive(Serialize)]
pub struct MatrixRecord<'a> {
    pub game_id: &'a str,
    pub season: i32,
    pub label: bool,
    pub score_diff: i32,
    pub features: BTreeMap<&'a str, f64>,
}

pub fn matrix_records<F: Real>(m: &FeatureMatrix<F>) -> Vec<MatrixRecord<'_>> {
    (0..m.n_rows())
        .map(|i| MatrixRecord {
            game_id: &m.game_ids()[i],
            season: m.seasons()[i],
            label: m.labels()[i],
            score_diff: m.score_diff()[i],
            features: m
                .column_names()
                .iter()
                .map(String::as_str)
                .zip(m.row(i).iter().map(|v| v.f64()))
                .collect(),
        })
        .collect()
}
