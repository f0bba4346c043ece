//! Report bundle: ranking tables, significance matrices, heatmap cells and
//! replication scatter data as CSV and JSON files in one directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::qc::{summary_csv, SummaryRow};
use crate::ranking::{Replication, SignificanceMatrix, SystemScorecard};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io failure writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ranking csv: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// File-name label, usually the condition name.
    pub label: String,
    pub scorecards: Vec<SystemScorecard>,
    pub matrix: Option<SignificanceMatrix>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub conditions: Vec<ConditionReport>,
    pub replication: Option<Replication>,
    pub qc_summary: Option<Vec<SummaryRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub dir: PathBuf,
    /// File names relative to `dir`, in write order.
    pub files: Vec<String>,
}

fn write(dir: &Path, name: &str, data: &[u8], files: &mut Vec<String>) -> Result<(), ReportError> {
    let path = dir.join(name);
    crate::assets::write_atomic(&path, data).map_err(|source| ReportError::Io { path, source })?;
    files.push(name.to_string());
    Ok(())
}

pub fn ranking_csv(cards: &[SystemScorecard]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "system_id", "raw_avg", "z_avg", "n_judgments"]).expect("in-memory write");
    for c in cards {
        w.write_record([
            c.rank.to_string(),
            c.system_id.clone(),
            c.raw_avg.to_string(),
            c.z_avg.to_string(),
            c.n_judgments.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn parse_ranking_csv(text: &str) -> Result<Vec<SystemScorecard>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ReportError::Parse(e.to_string()))?;
        if rec.len() != 5 {
            return Err(ReportError::Parse(format!("expected 5 columns, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| ReportError::Parse(format!("column {i}: {e}")));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| ReportError::Parse(format!("column {i}: {e}")));
        out.push(SystemScorecard {
            rank: int(0)?,
            system_id: rec[1].to_string(),
            raw_avg: num(2)?,
            z_avg: num(3)?,
            n_judgments: int(4)?,
        });
    }
    Ok(out)
}

pub fn matrix_json(m: &SignificanceMatrix, label: &str) -> serde_json::Value {
    json!({
        "v": SCHEMA_VERSION,
        "condition": label,
        "systems": m.systems,
        "levels": m.levels,
        "z_avg": m.z_avg,
        "n_judgments": m.n_judgments,
        "diff": m.diff,
        "p_value": m.p_value,
        "stars": m.stars,
    })
}

/// Head-to-head table: each cell is the row-minus-column difference with
/// star annotation, plus a judgment-count column.
pub fn appendix_csv(m: &SignificanceMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["system".to_string(), "n_judgments".to_string()];
    header.extend(m.systems.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (i, sys) in m.systems.iter().enumerate() {
        let mut row = vec![sys.clone(), m.n_judgments[i].to_string()];
        for j in 0..m.systems.len() {
            row.push(match (m.diff[i][j], m.stars[i][j]) {
                (Some(d), Some(s)) => format!("{d:.2}{}", SignificanceMatrix::star_string(s)),
                _ => String::new(),
            });
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// One row per off-diagonal cell.
pub fn heatmap_csv(m: &SignificanceMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "diff", "stars", "p"]).expect("in-memory write");
    for i in 0..m.systems.len() {
        for j in 0..m.systems.len() {
            if let (Some(d), Some(s), Some(p)) = (m.diff[i][j], m.stars[i][j], m.p_value[i][j]) {
                w.write_record([m.systems[i].clone(), m.systems[j].clone(), d.to_string(), s.to_string(), p.to_string()])
                    .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn replication_json(rep: Option<&Replication>) -> serde_json::Value {
    match rep {
        Some(r) => json!({ "v": SCHEMA_VERSION, "status": "present", "r": r.r, "points": r.points }),
        None => json!({ "v": SCHEMA_VERSION, "status": "absent" }),
    }
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json value serializes");
    out.push(b'\n');
    out
}

/// Writes every artifact under `dir` and a `bundle.json` index.
pub fn emit_report(dir: &Path, input: &ReportInput) -> Result<ReportBundle, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    let mut conditions = Vec::new();
    for c in &input.conditions {
        write(dir, &format!("ranking_{}.csv", c.label), ranking_csv(&c.scorecards).as_bytes(), &mut files)?;
        if let Some(m) = &c.matrix {
            write(dir, &format!("sigmatrix_{}.json", c.label), &pretty(&matrix_json(m, &c.label)), &mut files)?;
            write(dir, &format!("appendix_{}.csv", c.label), appendix_csv(m).as_bytes(), &mut files)?;
            write(dir, &format!("heatmap_{}.csv", c.label), heatmap_csv(m).as_bytes(), &mut files)?;
        }
        conditions.push(json!({
            "label": c.label,
            "systems": c.scorecards.len(),
            "matrix": if c.matrix.is_some() { "present" } else { "absent" },
        }));
    }
    write(dir, "replication.json", &pretty(&replication_json(input.replication.as_ref())), &mut files)?;
    if let Some(rows) = &input.qc_summary {
        write(dir, "qc_summary.csv", summary_csv(rows).as_bytes(), &mut files)?;
    }
    let index = json!({ "v": SCHEMA_VERSION, "conditions": conditions, "files": files });
    write(dir, "bundle.json", &pretty(&index), &mut files)?;
    Ok(ReportBundle { dir: dir.to_path_buf(), files })
}
