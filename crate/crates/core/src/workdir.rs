//! On-disk layout shared by the CLI and the campaign service.
//!
//! ```text
//! <workdir>/corpus/            testset.tsv, outputs/<system>.tsv, sample.json
//! <workdir>/hits/<campaign>/   <hit_id>.json
//! <workdir>/assets/            content-addressed audio and rasters
//! <workdir>/sessions/<campaign>/*.jsonl
//! <workdir>/report/            report artifacts
//! <workdir>/campaigns/<id>/    service event log and snapshot
//! <workdir>/run.json
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::hitgen::Hit;
use crate::qc::WorkerSession;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn hits(&self, campaign: &str) -> PathBuf {
        self.root.join("hits").join(campaign)
    }

    pub fn assets(&self) -> PathBuf {
        self.root.join("assets")
    }

    pub fn sessions(&self, campaign: &str) -> PathBuf {
        self.root.join("sessions").join(campaign)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn campaigns(&self) -> PathBuf {
        self.root.join("campaigns")
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run.json")
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut data = serde_json::to_vec_pretty(value).map_err(|e| invalid(path, e))?;
    data.push(b'\n');
    crate::assets::write_atomic(path, &data)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let raw = fs::read(path)?;
    serde_json::from_slice(&raw).map_err(|e| invalid(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut data = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut data, r).map_err(|e| invalid(path, e))?;
        data.push(b'\n');
    }
    crate::assets::write_atomic(path, &data)
}

pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut line = serde_json::to_vec(row).map_err(|e| invalid(path, e))?;
    line.push(b'\n');
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()
}

/// Reads JSON lines; a torn final line (no trailing newline) is ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    let mut reader = BufReader::new(f);
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(_) if !line.ends_with('\n') => break,
            Err(e) => return Err(invalid(path, format!("line {lineno}: {e}"))),
        }
    }
    Ok(out)
}

fn sorted_files(dir: &Path, ext: &str) -> std::io::Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

pub fn save_hits(dir: &Path, hits: &[Hit]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for h in hits {
        write_json(&dir.join(format!("{}.json", h.hit_id)), h)?;
    }
    Ok(())
}

/// All HIT manifests in `dir`, ordered by hit id.
pub fn load_hits(dir: &Path) -> std::io::Result<Vec<Hit>> {
    let mut hits: Vec<Hit> = sorted_files(dir, "json")?.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    hits.sort_by(|a, b| a.hit_id.cmp(&b.hit_id));
    Ok(hits)
}

/// Every session in every `*.jsonl` file of `dir`, files in name order.
pub fn load_sessions(dir: &Path) -> std::io::Result<Vec<WorkerSession>> {
    let mut out = Vec::new();
    for p in sorted_files(dir, "jsonl")? {
        out.extend(read_jsonl::<WorkerSession>(&p)?);
    }
    Ok(out)
}
