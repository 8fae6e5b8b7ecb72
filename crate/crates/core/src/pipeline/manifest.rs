use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellState {
    Done,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub status: CellState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CellStatus {
    pub fn done() -> Self {
        Self { status: CellState::Done, reason: None }
    }

    pub fn skipped(reason: impl Into<String>) -> Self {
        Self { status: CellState::Skipped, reason: Some(reason.into()) }
    }

    pub fn error(reason: impl Into<String>) -> Self {
        Self { status: CellState::Error, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed: bool,
    #[serde(default)]
    pub cells: BTreeMap<String, CellStatus>,
    /// Output file (relative to the output directory) → sha256.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
}

/// What a run consumed and produced. It holds no timestamps, so identical
/// runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: Config,
    /// Input file name → sha256.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(cfg: &Config) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        for p in [&cfg.inputs.prices, &cfg.inputs.supply, &cfg.inputs.regions, &cfg.inputs.calendar] {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            inputs.insert(name, sha256_file(p)?);
        }
        let mut config = cfg.clone();
        config.output_dir = ".".into();
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.digest(),
            seed: cfg.seed,
            config,
            inputs,
            stages: BTreeMap::new(),
        })
    }

    /// Load the manifest in `dir` if it belongs to the same config and
    /// inputs; otherwise start a fresh one.
    pub fn open(dir: &Path, cfg: &Config) -> Result<Self> {
        let fresh = Self::new(cfg)?;
        let path = dir.join(MANIFEST);
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(fresh);
        };
        match serde_json::from_str::<RunManifest>(&text) {
            Ok(old) if old.config_sha256 == fresh.config_sha256 && old.inputs == fresh.inputs => Ok(old),
            _ => {
                log::info!("event=manifest_reset reason=config_or_inputs_changed");
                Ok(fresh)
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::contract(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
