//! Campaign orchestration: assignment of HITs to workers, sequential
//! judgment intake and analysis, persisted as an append-only event log.
//!
//! Every mutation is first appended to `campaigns/<id>/events.jsonl` and
//! then applied to in-memory state through the same [`apply`] used on
//! replay, so reopening a workdir reconstructs identical state. Callers
//! serialize mutations (one writer per store); time is passed in explicitly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::AssetStore;
use crate::hitgen::{validate_hit, Condition, Hit, ItemKind};
use crate::qc::{filter_campaign, Overrides, QcConfig, SessionJudgment, WorkerSession};
use crate::ranking::{significance_matrix, system_scores, z_pools, DEFAULT_LEVELS};
use crate::report::{emit_report, ConditionReport, ReportInput};
use crate::workdir::{append_jsonl, load_hits, read_json, read_jsonl, write_json, write_jsonl, Workdir};

pub const PAYLOAD_VERSION: u32 = 1;
pub const DEFAULT_LEASE_MS: u64 = 2 * 60 * 60 * 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampaignError {
    #[error("campaign {0} not found")]
    NotFound(String),
    #[error("assignment {0} not found")]
    UnknownAssignment(String),
    #[error("campaign {0} already exists")]
    Conflict(String),
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error("HIT manifests missing in {hit_set}: {missing:?}")]
    MissingHits { hit_set: String, missing: Vec<String> },
    #[error("HIT {hit_id} item {item_index} has no audio asset")]
    MissingAudio { hit_id: String, item_index: usize },
    #[error("HIT {hit_id} item {item_index} has no raster image")]
    MissingRaster { hit_id: String, item_index: usize },
    #[error("HIT {hit_id} is for condition {found}, campaign is {expected}")]
    ConditionMismatch { hit_id: String, expected: Condition, found: Condition },
    #[error("HIT {hit_id} fails validation: {violations:?}")]
    InvalidHit { hit_id: String, violations: Vec<String> },
    #[error("cannot go from {from:?} to {to:?}")]
    InvalidTransition { from: CampaignState, to: CampaignState },
    #[error("campaign is {0:?}, not open")]
    NotOpen(CampaignState),
    #[error("no HITs available for this worker")]
    NoHitsAvailable,
    #[error("worker already holds active assignment {assignment_id}")]
    WorkerAlreadyActive { assignment_id: String },
    #[error("expected item {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("score {0} outside [0, 100]")]
    ScoreOutOfRange(f64),
    #[error("assignment {0} is no longer active")]
    StaleAssignment(String),
    #[error("campaign is {0:?}, analysis needs a closed campaign")]
    CampaignNotClosed(CampaignState),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CampaignError {
    fn from(e: std::io::Error) -> Self {
        CampaignError::Io(e.to_string())
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_target() -> usize {
    1
}

fn default_lease() -> u64 {
    DEFAULT_LEASE_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub condition: Condition,
    /// Directory under `hits/`; defaults to the campaign id.
    #[serde(default)]
    pub hit_set: Option<String>,
    /// Subset of the set's HITs; all of them when absent.
    #[serde(default)]
    pub hit_ids: Option<Vec<String>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_target")]
    pub judgments_per_segment_target: usize,
    #[serde(default = "default_lease")]
    pub lease_ms: u64,
}

impl CampaignConfig {
    pub fn new(campaign_id: impl Into<String>, condition: Condition) -> Self {
        Self {
            campaign_id: campaign_id.into(),
            condition,
            hit_set: None,
            hit_ids: None,
            alpha: default_alpha(),
            judgments_per_segment_target: default_target(),
            lease_ms: default_lease(),
        }
    }

    pub fn hit_set(&self) -> &str {
        self.hit_set.as_deref().unwrap_or(&self.campaign_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignState {
    Draft,
    Open,
    Closed,
    Analyzed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Active,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub hit_id: String,
    pub worker_id: String,
    /// Next expected item index.
    pub cursor: usize,
    pub n_items: usize,
    pub status: AssignmentStatus,
    pub started_at_ms: u64,
    pub lease_expires_at_ms: u64,
    pub completed_at_ms: Option<u64>,
    pub judgments: Vec<SessionJudgment>,
    pub feedback: Option<String>,
}

impl Assignment {
    pub fn session(&self) -> WorkerSession {
        WorkerSession {
            worker_id: self.worker_id.clone(),
            hit_id: self.hit_id.clone(),
            judgments: self.judgments.clone(),
            feedback: self.feedback.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RescheduleEntry {
    pub hit_id: String,
    /// Accepted judgments still needed per segment of this HIT.
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created { at_ms: u64, config: CampaignConfig, hit_ids: Vec<String> },
    Opened { at_ms: u64 },
    Closed { at_ms: u64 },
    Assigned { at_ms: u64, assignment_id: String, hit_id: String, worker_id: String, n_items: usize },
    JudgmentAccepted { at_ms: u64, assignment_id: String, judgment: SessionJudgment },
    Feedback { at_ms: u64, assignment_id: String, text: String },
    LeaseExpired { at_ms: u64, assignment_id: String },
    Analyzed { at_ms: u64, reschedule: Vec<RescheduleEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSnapshot {
    pub v: u32,
    pub config: CampaignConfig,
    pub state: CampaignState,
    pub hit_ids: Vec<String>,
    pub assignments: BTreeMap<String, Assignment>,
    pub reschedule: Vec<RescheduleEntry>,
    pub created_at_ms: u64,
    pub events: usize,
}

impl CampaignSnapshot {
    pub fn active_for_worker(&self, worker_id: &str) -> Option<&Assignment> {
        self.assignments.values().find(|a| a.worker_id == worker_id && a.status == AssignmentStatus::Active)
    }

    pub fn completed_sessions(&self) -> Vec<WorkerSession> {
        self.assignments
            .values()
            .filter(|a| a.status == AssignmentStatus::Completed)
            .map(Assignment::session)
            .collect()
    }
}

/// State transition for one event. Shared by live mutation and replay.
pub fn apply(snap: &mut CampaignSnapshot, event: &Event) {
    snap.events += 1;
    match event {
        Event::Created { .. } => {}
        Event::Opened { .. } => snap.state = CampaignState::Open,
        Event::Closed { .. } => snap.state = CampaignState::Closed,
        Event::Assigned { at_ms, assignment_id, hit_id, worker_id, n_items } => {
            snap.assignments.insert(
                assignment_id.clone(),
                Assignment {
                    assignment_id: assignment_id.clone(),
                    hit_id: hit_id.clone(),
                    worker_id: worker_id.clone(),
                    cursor: 0,
                    n_items: *n_items,
                    status: AssignmentStatus::Active,
                    started_at_ms: *at_ms,
                    lease_expires_at_ms: at_ms + snap.config.lease_ms,
                    completed_at_ms: None,
                    judgments: Vec::new(),
                    feedback: None,
                },
            );
        }
        Event::JudgmentAccepted { at_ms, assignment_id, judgment } => {
            if let Some(a) = snap.assignments.get_mut(assignment_id) {
                a.judgments.push(judgment.clone());
                a.cursor += 1;
                if a.cursor == a.n_items {
                    a.status = AssignmentStatus::Completed;
                    a.completed_at_ms = Some(*at_ms);
                }
            }
        }
        Event::Feedback { assignment_id, text, .. } => {
            if let Some(a) = snap.assignments.get_mut(assignment_id) {
                a.feedback = Some(text.clone());
            }
        }
        Event::LeaseExpired { assignment_id, .. } => {
            if let Some(a) = snap.assignments.get_mut(assignment_id) {
                a.status = AssignmentStatus::Expired;
            }
        }
        Event::Analyzed { reschedule, .. } => {
            snap.state = CampaignState::Analyzed;
            snap.reschedule = reschedule.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPayload {
    pub item_index: usize,
    pub reference_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

/// What a worker's client receives. Hypotheses appear only as media URLs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitPayload {
    pub v: u32,
    pub assignment_id: String,
    pub campaign_id: String,
    pub hit_id: String,
    pub condition: Condition,
    pub cursor: usize,
    pub lease_expires_at_ms: u64,
    pub items: Vec<ItemPayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSubmission {
    pub item_index: usize,
    pub score: f64,
    pub elapsed_ms: u64,
    pub slider_moved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentAck {
    pub v: u32,
    pub assignment_id: String,
    pub accepted_item_index: usize,
    pub next_item_index: Option<usize>,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub v: u32,
    pub campaign_id: String,
    pub report_dir: PathBuf,
    pub files: Vec<String>,
    pub sessions: usize,
    pub kept_judgments: usize,
    pub reschedule: Vec<RescheduleEntry>,
}

struct Campaign {
    snap: CampaignSnapshot,
    hits: BTreeMap<String, Hit>,
}

pub struct CampaignStore {
    workdir: Workdir,
    assets: Arc<AssetStore>,
    campaigns: BTreeMap<String, Campaign>,
    assignment_owner: HashMap<String, String>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !id.starts_with('.')
}

pub fn audio_url(asset_id: &str) -> String {
    format!("/assets/{asset_id}")
}

pub fn raster_url(asset_id: &str) -> String {
    format!("/rasters/{asset_id}")
}

impl CampaignStore {
    /// Opens a workdir, replaying every campaign's event log.
    pub fn open(workdir: Workdir) -> Result<Self, CampaignError> {
        let assets = Arc::new(AssetStore::open(workdir.assets())?);
        let mut store = Self { workdir, assets, campaigns: BTreeMap::new(), assignment_owner: HashMap::new() };
        let root = store.workdir.campaigns();
        if root.exists() {
            let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            dirs.sort();
            for dir in dirs {
                let log = dir.join("events.jsonl");
                if log.exists() {
                    store.replay(read_jsonl::<Event>(&log)?)?;
                }
            }
        }
        Ok(store)
    }

    fn replay(&mut self, events: Vec<Event>) -> Result<(), CampaignError> {
        let mut iter = events.into_iter();
        let Some(Event::Created { at_ms, config, hit_ids }) = iter.next() else {
            return Err(CampaignError::Io("event log does not start with a creation event".into()));
        };
        let hits = self.load_campaign_hits(&config, Some(&hit_ids))?;
        let mut snap = CampaignSnapshot {
            v: PAYLOAD_VERSION,
            config,
            state: CampaignState::Draft,
            hit_ids,
            assignments: BTreeMap::new(),
            reschedule: Vec::new(),
            created_at_ms: at_ms,
            events: 1,
        };
        for ev in iter {
            if let Event::Assigned { assignment_id, .. } = &ev {
                self.assignment_owner.insert(assignment_id.clone(), snap.config.campaign_id.clone());
            }
            apply(&mut snap, &ev);
        }
        self.campaigns.insert(snap.config.campaign_id.clone(), Campaign { snap, hits });
        Ok(())
    }

    pub fn workdir(&self) -> &Workdir {
        &self.workdir
    }

    pub fn assets(&self) -> &Arc<AssetStore> {
        &self.assets
    }

    pub fn campaign(&self, id: &str) -> Option<&CampaignSnapshot> {
        self.campaigns.get(id).map(|c| &c.snap)
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        self.campaigns.keys().cloned().collect()
    }

    pub fn assignment(&self, id: &str) -> Option<&Assignment> {
        let owner = self.assignment_owner.get(id)?;
        self.campaigns.get(owner)?.snap.assignments.get(id)
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.workdir.campaigns().join(id).join("events.jsonl")
    }

    fn write_snapshot(&self, id: &str) -> Result<(), CampaignError> {
        if let Some(c) = self.campaigns.get(id) {
            write_json(&self.workdir.campaigns().join(id).join("snapshot.json"), &c.snap)?;
        }
        Ok(())
    }

    fn record(&mut self, id: &str, event: Event) -> Result<(), CampaignError> {
        append_jsonl(&self.log_path(id), &event)?;
        let c = self.campaigns.get_mut(id).expect("caller checked campaign exists");
        if let Event::Assigned { assignment_id, .. } = &event {
            self.assignment_owner.insert(assignment_id.clone(), id.to_string());
        }
        apply(&mut c.snap, &event);
        Ok(())
    }

    fn load_campaign_hits(
        &self,
        config: &CampaignConfig,
        wanted: Option<&Vec<String>>,
    ) -> Result<BTreeMap<String, Hit>, CampaignError> {
        let dir = self.workdir.hits(config.hit_set());
        let all: BTreeMap<String, Hit> = load_hits(&dir)?.into_iter().map(|h| (h.hit_id.clone(), h)).collect();
        let Some(wanted) = wanted else {
            return Ok(all);
        };
        let missing: Vec<String> = wanted.iter().filter(|h| !all.contains_key(*h)).cloned().collect();
        if !missing.is_empty() {
            return Err(CampaignError::MissingHits { hit_set: config.hit_set().to_string(), missing });
        }
        Ok(all.into_iter().filter(|(k, _)| wanted.contains(k)).collect())
    }

    fn check_hit(&self, hit: &Hit, condition: Condition) -> Result<(), CampaignError> {
        if hit.condition != condition {
            return Err(CampaignError::ConditionMismatch { hit_id: hit.hit_id.clone(), expected: condition, found: hit.condition });
        }
        let violations = validate_hit(hit);
        if !violations.is_empty() {
            return Err(CampaignError::InvalidHit {
                hit_id: hit.hit_id.clone(),
                violations: violations.iter().map(ToString::to_string).collect(),
            });
        }
        for item in &hit.items {
            match condition {
                Condition::Multimodal => {
                    if !item.audio_ref.as_deref().is_some_and(|a| self.assets.contains(a)) {
                        return Err(CampaignError::MissingAudio { hit_id: hit.hit_id.clone(), item_index: item.item_index });
                    }
                }
                Condition::TextOnly => {
                    if !item.image_ref.as_deref().is_some_and(|a| self.assets.contains(a)) {
                        return Err(CampaignError::MissingRaster { hit_id: hit.hit_id.clone(), item_index: item.item_index });
                    }
                }
            }
        }
        Ok(())
    }

    /// Validates HITs and media, then persists a draft campaign.
    pub fn create_campaign(&mut self, config: CampaignConfig, now_ms: u64) -> Result<CampaignSnapshot, CampaignError> {
        if !valid_id(&config.campaign_id) || !valid_id(config.hit_set()) {
            return Err(CampaignError::InvalidConfig("ids may contain only ASCII letters, digits, '-', '_' and '.'".into()));
        }
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(CampaignError::InvalidConfig(format!("alpha {} not in (0, 1)", config.alpha)));
        }
        if config.judgments_per_segment_target == 0 {
            return Err(CampaignError::InvalidConfig("judgments_per_segment_target must be at least 1".into()));
        }
        if self.campaigns.contains_key(&config.campaign_id) || self.log_path(&config.campaign_id).exists() {
            return Err(CampaignError::Conflict(config.campaign_id.clone()));
        }
        let hits = self.load_campaign_hits(&config, config.hit_ids.as_ref())?;
        if hits.is_empty() {
            return Err(CampaignError::MissingHits { hit_set: config.hit_set().to_string(), missing: Vec::new() });
        }
        for hit in hits.values() {
            self.check_hit(hit, config.condition)?;
        }
        let hit_ids: Vec<String> = hits.keys().cloned().collect();
        let id = config.campaign_id.clone();
        let snap = CampaignSnapshot {
            v: PAYLOAD_VERSION,
            config: config.clone(),
            state: CampaignState::Draft,
            hit_ids: hit_ids.clone(),
            assignments: BTreeMap::new(),
            reschedule: Vec::new(),
            created_at_ms: now_ms,
            events: 0,
        };
        append_jsonl(&self.log_path(&id), &Event::Created { at_ms: now_ms, config, hit_ids })?;
        let mut snap = snap;
        snap.events = 1;
        self.campaigns.insert(id.clone(), Campaign { snap, hits });
        self.write_snapshot(&id)?;
        Ok(self.campaigns[&id].snap.clone())
    }

    fn get(&self, id: &str) -> Result<&Campaign, CampaignError> {
        self.campaigns.get(id).ok_or_else(|| CampaignError::NotFound(id.to_string()))
    }

    fn transition(&mut self, id: &str, from: CampaignState, to: CampaignState, event: Event) -> Result<(), CampaignError> {
        let state = self.get(id)?.snap.state;
        if state != from {
            return Err(CampaignError::InvalidTransition { from: state, to });
        }
        self.record(id, event)?;
        self.write_snapshot(id)
    }

    pub fn open_campaign(&mut self, id: &str, now_ms: u64) -> Result<(), CampaignError> {
        self.transition(id, CampaignState::Draft, CampaignState::Open, Event::Opened { at_ms: now_ms })
    }

    pub fn close_campaign(&mut self, id: &str, now_ms: u64) -> Result<(), CampaignError> {
        self.expire_leases(id, now_ms)?;
        self.transition(id, CampaignState::Open, CampaignState::Closed, Event::Closed { at_ms: now_ms })
    }

    fn expire_leases(&mut self, id: &str, now_ms: u64) -> Result<(), CampaignError> {
        let expired: Vec<String> = self
            .get(id)?
            .snap
            .assignments
            .values()
            .filter(|a| a.status == AssignmentStatus::Active && now_ms >= a.lease_expires_at_ms)
            .map(|a| a.assignment_id.clone())
            .collect();
        for assignment_id in expired {
            self.record(id, Event::LeaseExpired { at_ms: now_ms, assignment_id })?;
        }
        Ok(())
    }

    fn payload(&self, c: &Campaign, a: &Assignment) -> HitPayload {
        let hit = &c.hits[&a.hit_id];
        HitPayload {
            v: PAYLOAD_VERSION,
            assignment_id: a.assignment_id.clone(),
            campaign_id: c.snap.config.campaign_id.clone(),
            hit_id: a.hit_id.clone(),
            condition: hit.condition,
            cursor: a.cursor,
            lease_expires_at_ms: a.lease_expires_at_ms,
            items: hit
                .items
                .iter()
                .map(|i| ItemPayload {
                    item_index: i.item_index,
                    reference_text: i.reference_text.clone(),
                    audio_url: match hit.condition {
                        Condition::Multimodal => i.audio_ref.as_deref().map(audio_url),
                        Condition::TextOnly => None,
                    },
                    image_url: match hit.condition {
                        Condition::TextOnly => i.image_ref.as_deref().map(raster_url),
                        Condition::Multimodal => None,
                    },
                })
                .collect(),
        }
    }

    /// Payload of an existing assignment, e.g. after a client reload.
    pub fn assignment_payload(&self, assignment_id: &str) -> Result<HitPayload, CampaignError> {
        let owner = self
            .assignment_owner
            .get(assignment_id)
            .ok_or_else(|| CampaignError::UnknownAssignment(assignment_id.to_string()))?;
        let c = self.get(owner)?;
        Ok(self.payload(c, &c.snap.assignments[assignment_id]))
    }

    /// Assigns the first HIT (in id order) that is free, unseen by the
    /// worker, and still short of its judgment target.
    pub fn next_hit(&mut self, campaign_id: &str, worker_id: &str, now_ms: u64) -> Result<HitPayload, CampaignError> {
        if worker_id.is_empty() {
            return Err(CampaignError::InvalidConfig("empty worker token".into()));
        }
        let state = self.get(campaign_id)?.snap.state;
        if state != CampaignState::Open {
            return Err(CampaignError::NotOpen(state));
        }
        self.expire_leases(campaign_id, now_ms)?;
        let c = self.get(campaign_id)?;
        if let Some(a) = c.snap.active_for_worker(worker_id) {
            return Err(CampaignError::WorkerAlreadyActive { assignment_id: a.assignment_id.clone() });
        }
        let mut active: BTreeSet<&str> = BTreeSet::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut done: BTreeMap<&str, usize> = BTreeMap::new();
        for a in c.snap.assignments.values() {
            match a.status {
                AssignmentStatus::Active => {
                    active.insert(&a.hit_id);
                }
                AssignmentStatus::Completed => *done.entry(&a.hit_id).or_default() += 1,
                AssignmentStatus::Expired => {}
            }
            if a.worker_id == worker_id {
                seen.insert(&a.hit_id);
            }
        }
        let target = c.snap.config.judgments_per_segment_target;
        let hit_id = c
            .snap
            .hit_ids
            .iter()
            .find(|h| !active.contains(h.as_str()) && !seen.contains(h.as_str()) && done.get(h.as_str()).copied().unwrap_or(0) < target)
            .cloned()
            .ok_or(CampaignError::NoHitsAvailable)?;
        let assignment_id = format!("{campaign_id}-a{:06}", c.snap.assignments.len() + 1);
        let n_items = c.hits[&hit_id].items.len();
        self.record(
            campaign_id,
            Event::Assigned {
                at_ms: now_ms,
                assignment_id: assignment_id.clone(),
                hit_id,
                worker_id: worker_id.to_string(),
                n_items,
            },
        )?;
        let c = self.get(campaign_id)?;
        Ok(self.payload(c, &c.snap.assignments[&assignment_id]))
    }

    /// Accepts the judgment for the assignment's current cursor only.
    pub fn submit_judgment(
        &mut self,
        assignment_id: &str,
        sub: JudgmentSubmission,
        now_ms: u64,
    ) -> Result<JudgmentAck, CampaignError> {
        let owner = self
            .assignment_owner
            .get(assignment_id)
            .cloned()
            .ok_or_else(|| CampaignError::UnknownAssignment(assignment_id.to_string()))?;
        if self.get(&owner)?.snap.state != CampaignState::Open {
            return Err(CampaignError::StaleAssignment(assignment_id.to_string()));
        }
        self.expire_leases(&owner, now_ms)?;
        let a = &self.get(&owner)?.snap.assignments[assignment_id];
        if a.status != AssignmentStatus::Active {
            return Err(CampaignError::StaleAssignment(assignment_id.to_string()));
        }
        if !(sub.score.is_finite() && (0.0..=100.0).contains(&sub.score)) {
            return Err(CampaignError::ScoreOutOfRange(sub.score));
        }
        if sub.item_index != a.cursor {
            return Err(CampaignError::OutOfOrder { expected: a.cursor, got: sub.item_index });
        }
        let judgment = SessionJudgment {
            item_index: sub.item_index,
            score: sub.score,
            elapsed_ms: sub.elapsed_ms,
            slider_moved: sub.slider_moved,
        };
        self.record(&owner, Event::JudgmentAccepted { at_ms: now_ms, assignment_id: assignment_id.to_string(), judgment })?;
        let a = &self.get(&owner)?.snap.assignments[assignment_id];
        let completed = a.status == AssignmentStatus::Completed;
        let ack = JudgmentAck {
            v: PAYLOAD_VERSION,
            assignment_id: assignment_id.to_string(),
            accepted_item_index: sub.item_index,
            next_item_index: (!completed).then_some(a.cursor),
            completed,
        };
        if completed {
            let session = a.session();
            append_jsonl(&self.workdir.sessions(&owner).join("service.jsonl"), &session)?;
            self.write_snapshot(&owner)?;
        }
        Ok(ack)
    }

    pub fn submit_feedback(&mut self, assignment_id: &str, text: &str, now_ms: u64) -> Result<(), CampaignError> {
        let owner = self
            .assignment_owner
            .get(assignment_id)
            .cloned()
            .ok_or_else(|| CampaignError::UnknownAssignment(assignment_id.to_string()))?;
        let a = &self.get(&owner)?.snap.assignments[assignment_id];
        if a.status == AssignmentStatus::Expired {
            return Err(CampaignError::StaleAssignment(assignment_id.to_string()));
        }
        let text: String = text.chars().take(10_000).collect();
        self.record(&owner, Event::Feedback { at_ms: now_ms, assignment_id: assignment_id.to_string(), text })
    }

    pub fn report_dir(&self, campaign_id: &str) -> PathBuf {
        self.workdir.report().join(campaign_id)
    }

    /// QC, ranking and report for a closed campaign. Overrides default to
    /// `campaigns/<id>/overrides.json` when present.
    pub fn run_analysis(
        &mut self,
        campaign_id: &str,
        overrides: Option<Overrides>,
        now_ms: u64,
    ) -> Result<AnalysisOutcome, CampaignError> {
        let c = self.get(campaign_id)?;
        if c.snap.state != CampaignState::Closed {
            return Err(CampaignError::CampaignNotClosed(c.snap.state));
        }
        let overrides = match overrides {
            Some(o) => o,
            None => {
                let p = self.workdir.campaigns().join(campaign_id).join("overrides.json");
                if p.exists() {
                    read_json(&p)?
                } else {
                    Overrides::new()
                }
            }
        };
        let sessions = c.snap.completed_sessions();
        let qc = QcConfig { alpha: c.snap.config.alpha, ..QcConfig::default() };
        let filtered =
            filter_campaign(&sessions, &c.hits, &qc, &overrides).map_err(|e| CampaignError::Analysis(e.to_string()))?;
        let known: BTreeSet<String> =
            c.hits.values().flat_map(|h| h.items.iter().filter(|i| i.kind == ItemKind::Genuine)).map(|i| i.system_id.clone()).collect();
        let cards = system_scores(&filtered.kept, &known).map_err(|e| CampaignError::Analysis(e.to_string()))?;
        let pools = z_pools(&filtered.kept);
        let matrix = if pools.len() >= 2 && pools.values().all(|z| z.len() >= 2) {
            Some(significance_matrix(&pools, &DEFAULT_LEVELS).map_err(|e| CampaignError::Analysis(e.to_string()))?)
        } else {
            None
        };

        let passing: BTreeSet<&str> =
            filtered.reports.iter().filter(|r| r.pass_qc()).map(|r| r.worker_id.as_str()).collect();
        let target = c.snap.config.judgments_per_segment_target;
        let reschedule: Vec<RescheduleEntry> = c
            .snap
            .hit_ids
            .iter()
            .filter_map(|h| {
                let accepted = sessions.iter().filter(|s| &s.hit_id == h && passing.contains(s.worker_id.as_str())).count();
                (accepted < target).then(|| RescheduleEntry { hit_id: h.clone(), missing: target - accepted })
            })
            .collect();

        let dir = self.report_dir(campaign_id);
        let input = ReportInput {
            conditions: vec![ConditionReport {
                label: c.snap.config.condition.as_str().to_string(),
                scorecards: cards,
                matrix,
            }],
            replication: None,
            qc_summary: Some(filtered.summary.clone()),
        };
        let bundle = emit_report(&dir, &input).map_err(|e| CampaignError::Io(e.to_string()))?;
        write_json(&dir.join("reliability.json"), &filtered.reports)?;
        write_jsonl(&dir.join("kept.jsonl"), &filtered.kept)?;
        write_json(&dir.join("reschedule.json"), &reschedule)?;
        let mut files = bundle.files;
        files.extend(["reliability.json", "kept.jsonl", "reschedule.json"].map(String::from));

        self.record(campaign_id, Event::Analyzed { at_ms: now_ms, reschedule: reschedule.clone() })?;
        self.write_snapshot(campaign_id)?;
        let outcome = AnalysisOutcome {
            v: PAYLOAD_VERSION,
            campaign_id: campaign_id.to_string(),
            report_dir: dir.clone(),
            files,
            sessions: sessions.len(),
            kept_judgments: filtered.kept.len(),
            reschedule,
        };
        write_json(&dir.join("analysis.json"), &outcome)?;
        Ok(outcome)
    }
}
