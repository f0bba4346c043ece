//! `run.json`: effective settings, seeds and output digests of every step.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mmda_core::workdir::{read_json, write_json, Workdir};

use crate::config::Settings;
use crate::error::CliResult;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub argv: Vec<String>,
    pub settings: Settings,
    pub seeds: BTreeMap<String, u64>,
    /// Workdir-relative path to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub v: u32,
    pub steps: BTreeMap<String, Step>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Digests of `rel` (a file, or every file under a directory) keyed by
/// workdir-relative path.
pub fn digests(wd: &Workdir, rel: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let full = wd.root().join(rel);
    if full.is_file() {
        out.insert(rel.to_string(), sha256_file(&full)?);
    } else if full.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(&full)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
        entries.sort();
        for name in entries {
            let child = format!("{rel}/{}", name.to_string_lossy());
            out.extend(digests(wd, &child)?);
        }
    }
    Ok(out)
}

pub fn record(wd: &Workdir, key: &str, step: Step) -> CliResult<()> {
    let path = wd.run_manifest();
    let mut manifest: RunManifest = if path.exists() { read_json(&path)? } else { RunManifest::default() };
    manifest.v = MANIFEST_VERSION;
    manifest.steps.insert(key.to_string(), step);
    write_json(&path, &manifest)?;
    Ok(())
}
