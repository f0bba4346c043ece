//! Worker reliability from quality-control items.
//!
//! For every QC copy the score difference to its genuine origin is taken;
//! a worker is statistically reliable when the degraded-copy differences are
//! stochastically smaller than the repeat differences (one-sided rank-sum,
//! `p < alpha`). Robotic-response heuristics can veto a statistical pass.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hitgen::{Condition, Hit, ItemKind};
use crate::stats::{rank_sum_test, standardize, Alternative, StatsError, WorkerScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcError {
    #[error("session for HIT {hit_id} is missing item(s) {missing:?}")]
    IncompleteSession { hit_id: String, missing: Vec<usize> },
    #[error("session of worker {worker_id} references unknown HIT {hit_id}")]
    UnknownHit { worker_id: String, hit_id: String },
    #[error("session is for HIT {session} but was paired with HIT {hit}")]
    HitMismatch { session: String, hit: String },
    #[error("item indices not strictly increasing at position {0}")]
    NonSequential(usize),
    #[error("score {score} for item {item_index} outside [0, 100]")]
    ScoreOutOfRange { item_index: usize, score: f64 },
    #[error("item {0} does not exist in the HIT")]
    UnknownItem(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("override file: {0}")]
    Overrides(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionJudgment {
    pub item_index: usize,
    pub score: f64,
    pub elapsed_ms: u64,
    pub slider_moved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSession {
    pub worker_id: String,
    pub hit_id: String,
    pub judgments: Vec<SessionJudgment>,
    #[serde(default)]
    pub feedback: Option<String>,
}

impl WorkerSession {
    /// Checks sequential order and score range.
    pub fn validate(&self) -> Result<(), QcError> {
        for (pos, j) in self.judgments.iter().enumerate() {
            if !(0.0..=100.0).contains(&j.score) {
                return Err(QcError::ScoreOutOfRange { item_index: j.item_index, score: j.score });
            }
            if pos > 0 && j.item_index <= self.judgments[pos - 1].item_index {
                return Err(QcError::NonSequential(pos));
            }
        }
        Ok(())
    }

    fn score_map(&self) -> HashMap<usize, f64> {
        self.judgments.iter().map(|j| (j.item_index, j.score)).collect()
    }
}

/// `(d_bad, d_rep)`: QC-copy score minus origin score, in item order.
pub fn qc_score_differences(session: &WorkerSession, hit: &Hit) -> Result<(Vec<f64>, Vec<f64>), QcError> {
    if session.hit_id != hit.hit_id {
        return Err(QcError::HitMismatch { session: session.hit_id.clone(), hit: hit.hit_id.clone() });
    }
    session.validate()?;
    let scores = session.score_map();
    if let Some(j) = session.judgments.iter().find(|j| j.item_index >= hit.items.len()) {
        return Err(QcError::UnknownItem(j.item_index));
    }
    let missing: Vec<usize> = (0..hit.items.len()).filter(|i| !scores.contains_key(i)).collect();
    if !missing.is_empty() {
        return Err(QcError::IncompleteSession { hit_id: hit.hit_id.clone(), missing });
    }
    let (mut d_bad, mut d_rep) = (Vec::new(), Vec::new());
    for item in hit.qc_items() {
        let Some(origin) = item.origin_index else { continue };
        let d = scores[&item.item_index] - scores[&origin];
        match item.kind {
            ItemKind::BadReference => d_bad.push(d),
            ItemKind::AskAgain => d_rep.push(d),
            ItemKind::Genuine => {}
        }
    }
    Ok((d_bad, d_rep))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalVerdict {
    pub p_value: f64,
    pub pass: bool,
}

/// One-sided rank-sum of `d_bad` against `d_rep` (H1: degraded copies lose more).
pub fn assess_worker(d_bad: &[f64], d_rep: &[f64], alpha: f64) -> Result<StatisticalVerdict, StatsError> {
    let r = rank_sum_test(d_bad, d_rep, Alternative::Less)?;
    Ok(StatisticalVerdict { p_value: r.p_value, pass: r.p_value < alpha })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicFlag {
    TooFast,
    NoSliderMotion,
    ConstantScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub min_item_ms: u64,
    pub min_distinct: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { min_item_ms: 1500, min_distinct: 3 }
    }
}

fn median_ms(values: &mut [u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] as f64 } else { (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0 })
}

fn flags_for(judgments: &[&SessionJudgment], config: &HeuristicConfig) -> BTreeSet<HeuristicFlag> {
    let mut flags = BTreeSet::new();
    if judgments.is_empty() {
        return flags;
    }
    let mut elapsed: Vec<u64> = judgments.iter().map(|j| j.elapsed_ms).collect();
    if median_ms(&mut elapsed).is_some_and(|m| m < config.min_item_ms as f64) {
        flags.insert(HeuristicFlag::TooFast);
    }
    let unmoved = judgments.iter().filter(|j| !j.slider_moved).count();
    if unmoved * 2 > judgments.len() {
        flags.insert(HeuristicFlag::NoSliderMotion);
    }
    let distinct: BTreeSet<u64> = judgments.iter().map(|j| j.score.to_bits()).collect();
    if distinct.len() < config.min_distinct {
        flags.insert(HeuristicFlag::ConstantScores);
    }
    flags
}

pub fn heuristic_flags(session: &WorkerSession, config: &HeuristicConfig) -> BTreeSet<HeuristicFlag> {
    let refs: Vec<&SessionJudgment> = session.judgments.iter().collect();
    flags_for(&refs, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    FailStatistical,
    FailHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideVerdict {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictOverride {
    pub verdict: OverrideVerdict,
    #[serde(default)]
    pub reason: String,
}

pub type Overrides = BTreeMap<String, VerdictOverride>;

pub fn parse_overrides(json: &[u8]) -> Result<Overrides, QcError> {
    serde_json::from_slice(json).map_err(|e| QcError::Overrides(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcConfig {
    pub alpha: f64,
    pub heuristics: HeuristicConfig,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self { alpha: 0.05, heuristics: HeuristicConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub worker_id: String,
    pub condition: Condition,
    pub hit_ids: Vec<String>,
    pub n_bad_pairs: usize,
    pub n_repeat_pairs: usize,
    /// `None` when the worker's HITs lack one of the two QC kinds.
    pub p_value: Option<f64>,
    pub heuristic_flags: BTreeSet<HeuristicFlag>,
    pub verdict: Verdict,
    /// Outcome of manual review; defaults to the automatic verdict.
    pub approved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_reason: Option<String>,
}

impl ReliabilityReport {
    /// Counted as "Pass QC": automatic pass not overturned by review.
    pub fn pass_qc(&self) -> bool {
        self.verdict == Verdict::Pass && self.approved
    }
}

/// Scores a pooled set of sessions of one worker in one condition.
pub fn assess_sessions(
    worker_id: &str,
    sessions: &[(&WorkerSession, &Hit)],
    config: &QcConfig,
) -> Result<ReliabilityReport, QcError> {
    let (mut d_bad, mut d_rep) = (Vec::new(), Vec::new());
    let mut all = Vec::new();
    let mut condition = Condition::TextOnly;
    for (s, h) in sessions {
        let (b, r) = qc_score_differences(s, h)?;
        d_bad.extend(b);
        d_rep.extend(r);
        all.extend(s.judgments.iter());
        condition = h.condition;
    }
    let flags = flags_for(&all, &config.heuristics);
    let p_value = if d_bad.is_empty() || d_rep.is_empty() {
        None
    } else {
        Some(assess_worker(&d_bad, &d_rep, config.alpha)?.p_value)
    };
    let verdict = if !flags.is_empty() {
        Verdict::FailHeuristic
    } else if p_value.is_some_and(|p| p < config.alpha) {
        Verdict::Pass
    } else {
        Verdict::FailStatistical
    };
    let mut hit_ids: Vec<String> = sessions.iter().map(|(s, _)| s.hit_id.clone()).collect();
    hit_ids.sort();
    Ok(ReliabilityReport {
        worker_id: worker_id.to_string(),
        condition,
        hit_ids,
        n_bad_pairs: d_bad.len(),
        n_repeat_pairs: d_rep.len(),
        p_value,
        heuristic_flags: flags,
        verdict,
        approved: verdict == Verdict::Pass,
        override_reason: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptJudgment {
    pub worker_id: String,
    pub hit_id: String,
    pub item_index: usize,
    pub condition: Condition,
    pub system_id: String,
    pub seg_id: String,
    pub doc_id: String,
    pub raw: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSession {
    pub worker_id: String,
    pub hit_id: String,
    pub condition: Condition,
    pub reason: String,
}

/// One row of the workers/translations before-and-after-QC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: Condition,
    pub workers_total: usize,
    pub workers_approved: usize,
    pub workers_pass_qc: usize,
    pub workers_pass_qc_pct: f64,
    pub translations_total: usize,
    pub translations_approved: usize,
    pub translations_pass_qc: usize,
    pub translations_pass_qc_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub reports: Vec<ReliabilityReport>,
    pub kept: Vec<KeptJudgment>,
    pub rejected: Vec<RejectedSession>,
    pub summary: Vec<SummaryRow>,
}

fn pct(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

/// Runs QC over a whole campaign.
///
/// Sessions are pooled per (condition, worker). Incomplete or malformed
/// sessions are rejected without affecting the worker's other sessions.
/// Kept judgments are the genuine items of Pass-QC workers, standardized over
/// everything that worker scored in the condition.
pub fn filter_campaign(
    sessions: &[WorkerSession],
    hits: &BTreeMap<String, Hit>,
    config: &QcConfig,
    overrides: &Overrides,
) -> Result<FilterOutcome, QcError> {
    let mut out = FilterOutcome::default();
    let mut grouped: BTreeMap<(Condition, String), Vec<(&WorkerSession, &Hit)>> = BTreeMap::new();
    for s in sessions {
        let hit = hits.get(&s.hit_id).ok_or_else(|| QcError::UnknownHit {
            worker_id: s.worker_id.clone(),
            hit_id: s.hit_id.clone(),
        })?;
        match qc_score_differences(s, hit) {
            Ok(_) => grouped.entry((hit.condition, s.worker_id.clone())).or_default().push((s, hit)),
            Err(e @ (QcError::IncompleteSession { .. }
            | QcError::NonSequential(_)
            | QcError::ScoreOutOfRange { .. }
            | QcError::UnknownItem(_))) => out.rejected.push(RejectedSession {
                worker_id: s.worker_id.clone(),
                hit_id: s.hit_id.clone(),
                condition: hit.condition,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }

    let mut rows: BTreeMap<Condition, SummaryRow> = BTreeMap::new();
    for ((condition, worker_id), mut group) in grouped {
        group.sort_by(|a, b| a.0.hit_id.cmp(&b.0.hit_id));
        let mut report = assess_sessions(&worker_id, &group, config)?;
        if let Some(o) = overrides.get(&worker_id) {
            report.approved = o.verdict == OverrideVerdict::Approved;
            report.override_reason = Some(o.reason.clone());
        }
        let n_items: usize = group.iter().map(|(s, _)| s.judgments.len()).sum();
        let row = rows.entry(condition).or_insert_with(|| SummaryRow {
            condition,
            workers_total: 0,
            workers_approved: 0,
            workers_pass_qc: 0,
            workers_pass_qc_pct: 0.0,
            translations_total: 0,
            translations_approved: 0,
            translations_pass_qc: 0,
            translations_pass_qc_pct: 0.0,
        });
        row.workers_total += 1;
        row.translations_total += n_items;
        if report.approved {
            row.workers_approved += 1;
            row.translations_approved += n_items;
        }

        if report.pass_qc() {
            let mut scores = Vec::new();
            for (s, h) in &group {
                for j in &s.judgments {
                    let item = &h.items[j.item_index];
                    scores.push(WorkerScore { item: (*s, item), genuine: item.kind == ItemKind::Genuine, score: j.score });
                }
            }
            let by_worker = BTreeMap::from([(worker_id.clone(), scores)]);
            match standardize(&by_worker) {
                Ok(z) => {
                    row.workers_pass_qc += 1;
                    row.translations_pass_qc += n_items;
                    out.kept.extend(z.into_iter().map(|sj| {
                        let (s, item) = sj.item;
                        KeptJudgment {
                            worker_id: worker_id.clone(),
                            hit_id: s.hit_id.clone(),
                            item_index: item.item_index,
                            condition,
                            system_id: item.system_id.clone(),
                            seg_id: item.seg_id.clone(),
                            doc_id: item.doc_id.clone(),
                            raw: sj.raw,
                            z: sj.z,
                        }
                    }));
                }
                Err(e) => {
                    report.verdict = Verdict::FailHeuristic;
                    report.override_reason.get_or_insert_with(|| e.to_string());
                }
            }
        }
        if !report.pass_qc() {
            out.rejected.extend(group.iter().map(|(s, _)| RejectedSession {
                worker_id: worker_id.clone(),
                hit_id: s.hit_id.clone(),
                condition,
                reason: format!("{:?}", report.verdict),
            }));
        }
        out.reports.push(report);
    }
    for row in rows.values_mut() {
        row.workers_pass_qc_pct = pct(row.workers_pass_qc, row.workers_total);
        row.translations_pass_qc_pct = pct(row.translations_pass_qc, row.translations_total);
    }
    out.summary = rows.into_values().collect();
    Ok(out)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "modality",
        "workers_total",
        "workers_approved",
        "workers_pass_qc",
        "workers_pass_qc_pct",
        "translations_total",
        "translations_approved",
        "translations_pass_qc",
        "translations_pass_qc_pct",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.condition.as_str().to_string(),
            r.workers_total.to_string(),
            r.workers_approved.to_string(),
            r.workers_pass_qc.to_string(),
            format!("{:.2}", r.workers_pass_qc_pct),
            r.translations_total.to_string(),
            r.translations_approved.to_string(),
            r.translations_pass_qc.to_string(),
            format!("{:.2}", r.translations_pass_qc_pct),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
