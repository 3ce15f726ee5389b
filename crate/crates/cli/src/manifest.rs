//! Stage manifests: every subcommand records the content hashes of its
//! inputs and outputs plus the run seed, so a full pipeline run can be
//! audited end to end: each stage's manifest names exactly the bytes the
//! next stage consumed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use fcpipe_core::det::sha256_hex;

#[derive(Debug, Serialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub rng_seed: u64,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub counts: BTreeMap<String, Value>,
}

impl StageManifest {
    pub fn new(stage: &str, rng_seed: u64) -> Self {
        Self {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn stamp_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(stamp(path)?);
        Ok(())
    }

    pub fn stamp_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(stamp(path)?);
        Ok(())
    }

    pub fn count(&mut self, key: &str, value: impl Into<Value>) {
        self.counts.insert(key.to_string(), value.into());
    }

    /// Writes `<out_dir>/<stage>.manifest.json` and returns its path.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}.manifest.json", self.stage));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}

fn stamp(path: &Path) -> Result<FileStamp> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}
