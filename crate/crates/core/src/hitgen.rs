//! HIT assembly: 100-item bundles of genuine translations plus
//! quality-control copies (degraded `bad_reference` items and exact
//! `ask_again` repeats).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SampledSet, TestSet};
use crate::seeds::{derive_seed, labeled_rng, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HitError {
    #[error("hypothesis has {0} token(s); degradation needs at least 3")]
    TooShort(usize),
    #[error("donor pool has no usable tokens")]
    EmptyDonorPool,
    #[error("could not find a donor span that changes the hypothesis")]
    NoDistinctDonor,
    #[error("{available} genuine item(s) available, a HIT needs {needed}")]
    InsufficientSegments { available: usize, needed: usize },
    #[error("HIT {hit}: need {needed} QC candidates of kind {kind}, only {available} eligible")]
    QcCandidateShortage { hit: usize, kind: ItemKind, needed: usize, available: usize },
    #[error("invalid HIT configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TextOnly,
    Multimodal,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::TextOnly => "text_only",
            Condition::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text_only" | "text-only" | "text" => Ok(Condition::TextOnly),
            "multimodal" => Ok(Condition::Multimodal),
            other => Err(format!("unknown condition {other:?} (expected text_only or multimodal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Genuine,
    BadReference,
    AskAgain,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Genuine => "genuine",
            ItemKind::BadReference => "bad_reference",
            ItemKind::AskAgain => "ask_again",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitItem {
    pub item_index: usize,
    pub kind: ItemKind,
    pub system_id: String,
    pub seg_id: String,
    pub doc_id: String,
    pub position: usize,
    /// Text actually presented; degraded for `bad_reference`.
    pub shown_text: String,
    pub reference_text: String,
    /// Index of the genuine original, for QC items.
    pub origin_index: Option<usize>,
    pub audio_ref: Option<String>,
    /// Raster rendering of `shown_text` (text-only condition).
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub items: Vec<HitItem>,
}

impl Hit {
    pub fn qc_items(&self) -> impl Iterator<Item = &HitItem> {
        self.items.iter().filter(|i| i.kind != ItemKind::Genuine)
    }

    pub fn genuine_items(&self) -> impl Iterator<Item = &HitItem> {
        self.items.iter().filter(|i| i.kind == ItemKind::Genuine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitConfig {
    pub qc_ratio: f64,
    pub hit_size: usize,
    /// Minimum distance between a QC copy and its origin; capped at
    /// `hit_size / 5` so that small HITs stay feasible.
    pub min_qc_gap: usize,
}

impl Default for HitConfig {
    fn default() -> Self {
        Self { qc_ratio: 0.20, hit_size: 100, min_qc_gap: 10 }
    }
}

impl HitConfig {
    pub fn validate(&self) -> Result<(), HitError> {
        if !(self.qc_ratio > 0.0 && self.qc_ratio <= 0.5) {
            return Err(HitError::InvalidConfig(format!("qc_ratio {} not in (0, 0.5]", self.qc_ratio)));
        }
        if self.hit_size < 10 {
            return Err(HitError::InvalidConfig(format!("hit_size {} below 10", self.hit_size)));
        }
        Ok(())
    }

    pub fn genuine_per_hit(&self) -> usize {
        (self.hit_size as f64 * (1.0 - self.qc_ratio) + 1e-9).floor() as usize
    }

    pub fn qc_per_hit(&self) -> usize {
        self.hit_size - self.genuine_per_hit()
    }

    /// (bad_reference, ask_again); the odd slot, if any, goes to bad_reference.
    pub fn qc_split(&self) -> (usize, usize) {
        let qc = self.qc_per_hit();
        (qc.div_ceil(2), qc / 2)
    }

    pub fn effective_gap(&self) -> usize {
        self.min_qc_gap.min(self.hit_size / 5).max(1)
    }
}

/// Replaces a contiguous span of `max(2, ceil(n/4))` tokens with an equally
/// long span taken from a random donor text. Token count is preserved and
/// the result always differs from the input.
pub fn degrade_translation(hypothesis: &str, donor_pool: &[&str], seed: u64) -> Result<String, HitError> {
    let tokens: Vec<&str> = hypothesis.split_whitespace().collect();
    let n = tokens.len();
    if n < 3 {
        return Err(HitError::TooShort(n));
    }
    if donor_pool.iter().all(|d| d.split_whitespace().next().is_none()) {
        return Err(HitError::EmptyDonorPool);
    }
    let k = 2.max(n.div_ceil(4));
    let mut rng = rng_from_seed(seed);
    for _ in 0..32 {
        let start = rng.random_range(0..=n - k);
        // uniform over non-empty donors, tokenizing only the one drawn
        let donor: Vec<&str> = loop {
            let d: Vec<&str> = donor_pool[rng.random_range(0..donor_pool.len())].split_whitespace().collect();
            if !d.is_empty() {
                break d;
            }
        };
        let offset = rng.random_range(0..donor.len());
        // wraps around short donors
        let span: Vec<&str> = (0..k).map(|i| donor[(offset + i) % donor.len()]).collect();
        if span[..] == tokens[start..start + k] {
            continue;
        }
        let mut out = tokens.clone();
        out[start..start + k].copy_from_slice(&span);
        return Ok(out.join(" "));
    }
    Err(HitError::NoDistinctDonor)
}

/// One system's translation of one document: the unit kept together in a HIT.
#[derive(Debug, Clone)]
struct Unit {
    system_id: String,
    seg_idx: Vec<usize>,
}

/// Genuine item before it gets an index.
#[derive(Debug, Clone)]
struct Slot {
    system_id: String,
    seg_idx: usize,
}

/// Packs units into chunks of exactly `capacity` genuine slots.
///
/// A unit that does not fit in the current chunk is deferred in favour of a
/// later one that does; only when nothing fits is a unit split, head in the
/// current chunk and tail at the start of the next. The final chunk is
/// topped up from the beginning of the stream.
fn pack(units: &[Unit], capacity: usize) -> Vec<Vec<Slot>> {
    let total: usize = units.iter().map(|u| u.seg_idx.len()).sum();
    let mut queue: std::collections::VecDeque<Unit> = units.iter().cloned().collect();
    let mut chunks = Vec::new();
    let mut current: Vec<Slot> = Vec::new();
    let push_unit = |current: &mut Vec<Slot>, u: &Unit, range: std::ops::Range<usize>| {
        for &i in &u.seg_idx[range] {
            current.push(Slot { system_id: u.system_id.clone(), seg_idx: i });
        }
    };
    while let Some(front) = queue.pop_front() {
        let room = capacity - current.len();
        if front.seg_idx.len() <= room {
            push_unit(&mut current, &front, 0..front.seg_idx.len());
        } else if let Some(pos) = (front.seg_idx.len() <= capacity)
            .then(|| queue.iter().position(|u| u.seg_idx.len() <= room))
            .flatten()
        {
            let fit = queue.remove(pos).expect("position is in range");
            push_unit(&mut current, &fit, 0..fit.seg_idx.len());
            queue.push_front(front);
        } else {
            push_unit(&mut current, &front, 0..room);
            queue.push_front(Unit { system_id: front.system_id, seg_idx: front.seg_idx[room..].to_vec() });
        }
        if current.len() == capacity {
            chunks.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() && total >= capacity {
        top_up(&mut current, units, capacity);
        chunks.push(current);
    }
    chunks
}

/// Fills the last, partial chunk with items from the start of the stream.
///
/// The chunk holds whole units or the tail of a split one. A unit with a tail
/// present gets its missing head inserted just before that tail, so each
/// (document, system) run stays contiguous and ordered.
fn top_up(current: &mut Vec<Slot>, units: &[Unit], capacity: usize) {
    for u in units {
        let room = capacity - current.len();
        if room == 0 {
            break;
        }
        let present = current
            .iter()
            .position(|s| s.system_id == u.system_id && u.seg_idx.contains(&s.seg_idx));
        let slots = |r: &[usize]| r.iter().map(|&i| Slot { system_id: u.system_id.clone(), seg_idx: i }).collect::<Vec<_>>();
        match present {
            None => current.extend(slots(&u.seg_idx[..room.min(u.seg_idx.len())])),
            Some(at) => {
                let k = u.seg_idx.iter().position(|&i| i == current[at].seg_idx).unwrap_or(0);
                let take = room.min(k);
                let head = slots(&u.seg_idx[k - take..k]);
                current.splice(at..at, head);
            }
        }
    }
}

/// Builds HITs covering every (system, segment) pair of the sample.
///
/// Genuine items follow the sampled document order; within a document the
/// systems appear in a seeded random order. Each HIT receives
/// `hit_size - floor(hit_size * (1 - qc_ratio))` QC copies of its own
/// genuine items, split evenly between `bad_reference` and `ask_again`,
/// each placed at least `effective_gap()` positions after its origin.
pub fn build_hits(
    testset: &TestSet,
    sampled: &SampledSet,
    condition: Condition,
    config: &HitConfig,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<Hit>, HitError> {
    config.validate()?;
    let capacity = config.genuine_per_hit();
    let segments = testset.segments();
    let chosen: BTreeSet<&str> = sampled.selected_doc_ids.iter().map(String::as_str).collect();
    let systems: Vec<String> = testset.systems().map(str::to_string).collect();

    let mut order_rng = labeled_rng(seed, "hitgen/system-order");
    let mut units = Vec::new();
    let mut offset = 0;
    for doc in testset.documents() {
        let idx: Vec<usize> = (offset..offset + doc.segments.len()).collect();
        offset += doc.segments.len();
        if !chosen.contains(doc.doc_id) {
            continue;
        }
        let mut sys = systems.clone();
        sys.shuffle(&mut order_rng);
        for s in sys {
            units.push(Unit { system_id: s, seg_idx: idx.clone() });
        }
    }
    let available: usize = units.iter().map(|u| u.seg_idx.len()).sum();
    if available < capacity {
        return Err(HitError::InsufficientSegments { available, needed: capacity });
    }

    // donors: every hypothesis in the sample
    let donor_pool: Vec<(&str, &str, &str)> = units
        .iter()
        .flat_map(|u| u.seg_idx.iter().map(move |&i| (u.system_id.as_str(), i)))
        .map(|(sys, i)| {
            let seg = &segments[i];
            (sys, seg.seg_id.as_str(), testset.hypothesis(sys, &seg.seg_id).unwrap_or_default())
        })
        .collect();

    let chunks = pack(&units, capacity);
    let mut hits = Vec::with_capacity(chunks.len());
    for (n, chunk) in chunks.into_iter().enumerate() {
        let hit_seed = derive_seed(seed, &format!("hitgen/hit/{n}"));
        let genuine: Vec<HitItem> = chunk
            .iter()
            .map(|slot| {
                let seg = &segments[slot.seg_idx];
                HitItem {
                    item_index: 0,
                    kind: ItemKind::Genuine,
                    system_id: slot.system_id.clone(),
                    seg_id: seg.seg_id.clone(),
                    doc_id: seg.doc_id.clone(),
                    position: seg.position,
                    shown_text: testset.hypothesis(&slot.system_id, &seg.seg_id).unwrap_or_default().to_string(),
                    reference_text: seg.reference.clone(),
                    origin_index: None,
                    audio_ref: None,
                    image_ref: None,
                }
            })
            .collect();
        let items = add_quality_control(n, genuine, config, hit_seed, &donor_pool)?;
        hits.push(Hit { hit_id: format!("{id_prefix}-{n:04}"), condition, seed: hit_seed, items });
    }
    Ok(hits)
}

fn add_quality_control(
    hit_no: usize,
    genuine: Vec<HitItem>,
    config: &HitConfig,
    hit_seed: u64,
    donor_pool: &[(&str, &str, &str)],
) -> Result<Vec<HitItem>, HitError> {
    let g = genuine.len();
    let gap = config.effective_gap();
    let (n_bad, n_rep) = config.qc_split();
    let mut rng = rng_from_seed(hit_seed);

    // origins must leave room for a copy `gap` slots later
    let eligible: Vec<usize> = (0..=g.saturating_sub(gap)).filter(|&i| i < g).collect();
    let bad_eligible: Vec<usize> =
        eligible.iter().copied().filter(|&i| genuine[i].shown_text.split_whitespace().count() >= 3).collect();
    if bad_eligible.len() < n_bad {
        return Err(HitError::QcCandidateShortage {
            hit: hit_no,
            kind: ItemKind::BadReference,
            needed: n_bad,
            available: bad_eligible.len(),
        });
    }
    let bad_origins: Vec<usize> =
        index::sample(&mut rng, bad_eligible.len(), n_bad).into_iter().map(|i| bad_eligible[i]).collect();
    let rest: Vec<usize> = eligible.iter().copied().filter(|i| !bad_origins.contains(i)).collect();
    if rest.len() < n_rep {
        return Err(HitError::QcCandidateShortage {
            hit: hit_no,
            kind: ItemKind::AskAgain,
            needed: n_rep,
            available: rest.len(),
        });
    }
    let rep_origins: Vec<usize> = index::sample(&mut rng, rest.len(), n_rep).into_iter().map(|i| rest[i]).collect();

    // copies keyed by the genuine slot they follow
    let mut after: BTreeMap<usize, Vec<(usize, ItemKind, String)>> = BTreeMap::new();
    for (kind, origins) in [(ItemKind::BadReference, &bad_origins), (ItemKind::AskAgain, &rep_origins)] {
        for &o in origins {
            let text = if kind == ItemKind::BadReference {
                let item = &genuine[o];
                let donors: Vec<&str> = donor_pool
                    .iter()
                    .filter(|(sys, seg, _)| !(*sys == item.system_id && *seg == item.seg_id))
                    .map(|(_, _, h)| *h)
                    .collect();
                degrade_translation(&item.shown_text, &donors, derive_seed(hit_seed, &format!("degrade/{o}")))?
            } else {
                genuine[o].shown_text.clone()
            };
            let slot = rng.random_range(o + gap - 1..g);
            after.entry(slot).or_default().push((o, kind, text));
        }
    }
    for copies in after.values_mut() {
        copies.shuffle(&mut rng);
    }

    let mut items = Vec::with_capacity(config.hit_size);
    let mut final_index = vec![0usize; g];
    for (gi, item) in genuine.iter().enumerate() {
        final_index[gi] = items.len();
        items.push(HitItem { item_index: items.len(), ..item.clone() });
        if let Some(copies) = after.get(&gi) {
            for (o, kind, text) in copies {
                items.push(HitItem {
                    item_index: items.len(),
                    kind: *kind,
                    shown_text: text.clone(),
                    origin_index: Some(final_index[*o]),
                    ..genuine[*o].clone()
                });
            }
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    WrongSize,
    IndexMismatch,
    GenuineWithOrigin,
    QcWithoutOrigin,
    OriginNotEarlier,
    OriginNotGenuine,
    OriginMismatch,
    RepeatMismatch,
    DegradationNoop,
    QcFraction,
    QcSplit,
    DocumentOrder,
    MediaMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub item_index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.item_index {
            Some(i) => write!(f, "{:?}@{i}", self.rule),
            None => write!(f, "{:?}", self.rule),
        }
    }
}

/// Checks a HIT against the default design (100 items, 20% QC).
pub fn validate_hit(hit: &Hit) -> Vec<Violation> {
    validate_hit_with(hit, &HitConfig::default())
}

pub fn validate_hit_with(hit: &Hit, config: &HitConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |item_index: Option<usize>, rule: Rule| out.push(Violation { item_index, rule });
    if hit.items.len() != config.hit_size {
        flag(None, Rule::WrongSize);
    }
    for (i, item) in hit.items.iter().enumerate() {
        if item.item_index != i {
            flag(Some(i), Rule::IndexMismatch);
        }
        match (hit.condition, &item.audio_ref, &item.image_ref) {
            (Condition::TextOnly, Some(_), _) | (Condition::Multimodal, _, Some(_)) => flag(Some(i), Rule::MediaMismatch),
            _ => {}
        }
        if item.kind == ItemKind::Genuine {
            if item.origin_index.is_some() {
                flag(Some(i), Rule::GenuineWithOrigin);
            }
            continue;
        }
        let Some(o) = item.origin_index else {
            flag(Some(i), Rule::QcWithoutOrigin);
            continue;
        };
        if o >= i {
            flag(Some(i), Rule::OriginNotEarlier);
            continue;
        }
        let origin = &hit.items[o];
        if origin.kind != ItemKind::Genuine {
            flag(Some(i), Rule::OriginNotGenuine);
        }
        if origin.seg_id != item.seg_id || origin.system_id != item.system_id {
            flag(Some(i), Rule::OriginMismatch);
        }
        match item.kind {
            ItemKind::AskAgain if item.shown_text != origin.shown_text => flag(Some(i), Rule::RepeatMismatch),
            ItemKind::BadReference if item.shown_text == origin.shown_text => flag(Some(i), Rule::DegradationNoop),
            _ => {}
        }
    }

    let bad = hit.items.iter().filter(|i| i.kind == ItemKind::BadReference).count();
    let rep = hit.items.iter().filter(|i| i.kind == ItemKind::AskAgain).count();
    if hit.items.len() == config.hit_size && bad + rep != config.qc_per_hit() {
        flag(None, Rule::QcFraction);
    }
    if bad.abs_diff(rep) > 1 {
        flag(None, Rule::QcSplit);
    }

    // genuine items of one (document, system) are consecutive and position-ordered
    let genuine: Vec<&HitItem> = hit.genuine_items().collect();
    let mut last_seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (gi, item) in genuine.iter().enumerate() {
        let key = (item.doc_id.as_str(), item.system_id.as_str());
        if let Some(&prev) = last_seen.get(&key) {
            if prev + 1 != gi || genuine[prev].position + 1 != item.position {
                flag(Some(item.item_index), Rule::DocumentOrder);
            }
        }
        last_seen.insert(key, gi);
    }
    out
}
