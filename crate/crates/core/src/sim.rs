//! Seeded synthetic corpora and annotator personas.
//!
//! Systems get planted true qualities; simulated workers score HIT items
//! according to their persona. Every random draw flows from a labeled
//! sub-seed so that two runs with the same root seed are identical.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_testset, sample_balanced, CorpusError, SampledSet, TestSet};
use crate::hitgen::{build_hits, Condition, Hit, HitConfig, HitError, ItemKind};
use crate::qc::{SessionJudgment, WorkerSession};
use crate::seeds::labeled_rng;

const WORDS: &[&str] = &[
    "the", "a", "new", "old", "market", "price", "customer", "order", "delivery", "please", "thanks", "today",
    "tomorrow", "city", "council", "report", "police", "game", "team", "season", "phone", "battery", "screen",
    "quality", "return", "refund", "account", "password", "email", "message", "friend", "family", "weekend",
    "holiday", "weather", "rain", "sun", "river", "bridge", "road", "train", "station", "ticket", "minister",
    "election", "vote", "school", "teacher", "student", "book", "music", "concert", "film", "actor", "we", "they",
    "you", "it", "is", "was", "will", "can", "not", "very", "quite", "really", "and", "but", "because", "when",
    "after", "before", "with", "without", "from", "into", "about", "again", "still", "already", "never",
    "always", "small", "large", "cheap", "expensive", "quick", "slow", "happy", "sad", "early", "late",
];

/// Domain layout with the segment counts and average document lengths of
/// the WMT22 English-German general test set.
pub fn wmt_shaped_domains() -> Vec<(String, Vec<usize>)> {
    [("conversation", 462, 68), ("ecommerce", 501, 27), ("news", 506, 35), ("social", 515, 33)]
        .iter()
        .map(|(name, total, docs)| (name.to_string(), (0..*docs).map(|i| total / docs + usize::from(i < total % docs)).collect()))
        .collect()
}

pub fn system_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("sys{i:02}")).collect()
}

fn sentence(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty vocabulary")).collect::<Vec<_>>().join(" ")
}

/// TSV bytes for a synthetic test set: `(testset.tsv, system → outputs.tsv)`.
pub fn synthetic_tsv(
    domains: &[(String, Vec<usize>)],
    systems: &[String],
    seed: u64,
) -> (Vec<u8>, BTreeMap<String, Vec<u8>>) {
    let mut rng = labeled_rng(seed, "sim/corpus");
    let mut tsv = String::new();
    let mut seg_ids = Vec::new();
    for (domain, lens) in domains {
        for (d, &len) in lens.iter().enumerate() {
            let doc = format!("{domain}-doc{d:03}");
            for p in 0..len {
                let seg = format!("{doc}-{p}");
                let src = sentence(&mut rng, 4, 20);
                let reference = sentence(&mut rng, 4, 20);
                tsv.push_str(&format!("{doc}\t{seg}\t{domain}\t{p}\tsrc {src}\t{reference}\n"));
                seg_ids.push(seg);
            }
        }
    }
    let outputs = systems
        .iter()
        .map(|sys| {
            let mut rng = labeled_rng(seed, &format!("sim/output/{sys}"));
            let body: String = seg_ids.iter().map(|s| format!("{s}\t{}\n", sentence(&mut rng, 4, 20))).collect();
            (sys.clone(), body.into_bytes())
        })
        .collect();
    (tsv.into_bytes(), outputs)
}

pub fn synthetic_testset(domains: &[(String, Vec<usize>)], systems: &[String], seed: u64) -> Result<TestSet, CorpusError> {
    let (tsv, outputs) = synthetic_tsv(domains, systems, seed);
    parse_testset(&tsv, &outputs)
}

/// Equally spaced true qualities (mean `center`), assigned to systems in a
/// seeded random order.
pub fn planted_qualities(systems: &[String], center: f64, spacing: f64, seed: u64) -> BTreeMap<String, f64> {
    let mut order: Vec<&String> = systems.iter().collect();
    order.shuffle(&mut labeled_rng(seed, "sim/qualities"));
    let mid = (systems.len() as f64 - 1.0) / 2.0;
    order
        .into_iter()
        .enumerate()
        .map(|(k, s)| (s.clone(), center + spacing * (k as f64 - mid)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    /// Scores true quality plus noise; penalizes degradations, repeats consistently.
    Reliable,
    /// Uniform 0-100 regardless of content, at human pace.
    Random,
    /// Same score every time, fast, without touching the slider.
    Constant,
}

impl std::str::FromStr for Persona {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reliable" => Ok(Persona::Reliable),
            "random" => Ok(Persona::Random),
            "constant" => Ok(Persona::Constant),
            other => Err(format!("unknown persona {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonaParams {
    /// Per-judgment noise around the system's true quality.
    pub noise_sd: f64,
    /// Spread of a worker's personal leniency offset.
    pub leniency_sd: f64,
    /// ask_again copy = origin + U[-repeat_jitter, repeat_jitter].
    pub repeat_jitter: f64,
    /// bad_reference copy = origin - bad_penalty + U[-bad_jitter, bad_jitter].
    pub bad_penalty: f64,
    pub bad_jitter: f64,
    pub constant_score: f64,
}

impl Default for PersonaParams {
    fn default() -> Self {
        Self { noise_sd: 15.0, leniency_sd: 5.0, repeat_jitter: 5.0, bad_penalty: 30.0, bad_jitter: 10.0, constant_score: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimWorker {
    pub worker_id: String,
    pub persona: Persona,
}

/// Worker list in persona order; ids are opaque tokens.
pub fn population(reliable: usize, random: usize, constant: usize) -> Vec<SimWorker> {
    let mut out = Vec::new();
    for (persona, n) in [(Persona::Reliable, reliable), (Persona::Random, random), (Persona::Constant, constant)] {
        for _ in 0..n {
            out.push(SimWorker { worker_id: format!("w{:05}", out.len() + 1), persona });
        }
    }
    out
}

fn clamp_round(x: f64) -> f64 {
    x.round().clamp(0.0, 100.0)
}

/// One worker's pass through one HIT.
pub fn simulate_session(
    worker: &SimWorker,
    hit: &Hit,
    qualities: &BTreeMap<String, f64>,
    params: &PersonaParams,
    seed: u64,
) -> WorkerSession {
    let mut rng = labeled_rng(seed, &format!("sim/session/{}/{}", worker.worker_id, hit.hit_id));
    let mut lenient = labeled_rng(seed, &format!("sim/leniency/{}", worker.worker_id));
    let leniency = Normal::new(0.0, params.leniency_sd.max(0.0)).expect("finite sd").sample(&mut lenient);
    let noise = Normal::new(0.0, params.noise_sd.max(0.0)).expect("finite sd");
    let mut scores: Vec<f64> = Vec::with_capacity(hit.items.len());
    let mut judgments = Vec::with_capacity(hit.items.len());
    for item in &hit.items {
        let score = match worker.persona {
            Persona::Reliable => match (item.kind, item.origin_index) {
                (ItemKind::AskAgain, Some(o)) => {
                    clamp_round(scores[o] + rng.random_range(-params.repeat_jitter..=params.repeat_jitter))
                }
                (ItemKind::BadReference, Some(o)) => clamp_round(
                    scores[o] - params.bad_penalty + rng.random_range(-params.bad_jitter..=params.bad_jitter),
                ),
                _ => {
                    let q = qualities.get(&item.system_id).copied().unwrap_or(50.0);
                    clamp_round(q + leniency + noise.sample(&mut rng))
                }
            },
            Persona::Random => rng.random_range(0..=100) as f64,
            Persona::Constant => params.constant_score,
        };
        let (elapsed_ms, slider_moved) = match worker.persona {
            Persona::Constant => (rng.random_range(200..=900), false),
            _ => (rng.random_range(3000..=15000), true),
        };
        scores.push(score);
        judgments.push(SessionJudgment { item_index: item.item_index, score, elapsed_ms, slider_moved });
    }
    WorkerSession { worker_id: worker.worker_id.clone(), hit_id: hit.hit_id.clone(), judgments, feedback: None }
}

/// Hands out HITs round-robin, `hits_per_worker` each, and simulates every session.
pub fn simulate_campaign(
    hits: &[Hit],
    workers: &[SimWorker],
    qualities: &BTreeMap<String, f64>,
    params: &PersonaParams,
    hits_per_worker: usize,
    seed: u64,
) -> Vec<WorkerSession> {
    if hits.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(workers.len() * hits_per_worker);
    let mut next = 0;
    for w in workers {
        for _ in 0..hits_per_worker {
            out.push(simulate_session(w, &hits[next % hits.len()], qualities, params, seed));
            next += 1;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub testset: TestSet,
    pub sampled: SampledSet,
    pub hits: Vec<Hit>,
    pub qualities: BTreeMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Hit(#[from] HitError),
}

/// WMT-shaped corpus, `num_systems` systems with planted qualities, sampled
/// to `target` segments per system and packed into default HITs.
pub fn planted_scenario(
    num_systems: usize,
    spacing: f64,
    target: usize,
    condition: Condition,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    let systems = system_names(num_systems);
    let testset = synthetic_testset(&wmt_shaped_domains(), &systems, seed)?;
    let sampled = sample_balanced(&testset, target, crate::seeds::derive_seed(seed, "sampling"))?;
    let hits = build_hits(
        &testset,
        &sampled,
        condition,
        &HitConfig::default(),
        crate::seeds::derive_seed(seed, "hitgen"),
        condition.as_str(),
    )?;
    let qualities = planted_qualities(&systems, 60.0, spacing, seed);
    Ok(Scenario { testset, sampled, hits, qualities })
}
