//! Text-to-speech gateway for multimodal HITs.
//!
//! A [`TtsGateway`] fronts a [`TtsProvider`] with the content-addressed
//! [`AssetStore`]: an asset id is the hash of `(text, voice)` and a cached id
//! is never re-synthesized. [`StubProvider`] renders a deterministic tone
//! pattern so the whole pipeline runs offline; [`CloudProvider`] talks to a
//! hosted HTTPS JSON synthesis endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{content_hash, AssetStore, IndexEntry, MediaFormat};
use crate::hitgen::{Condition, Hit};

pub const DEFAULT_CHAR_LIMIT: usize = 5000;
pub const API_KEY_ENV: &str = "TTS_API_KEY";
pub const DEFAULT_CLOUD_ENDPOINT: &str = "https://texttospeech.googleapis.com";

const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider rejected request: {0}")]
    ProviderRejected(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("text has {len} characters, provider limit is {limit}")]
    TextTooLong { len: usize, limit: usize },
    #[error("text is empty")]
    TextTooShort,
    #[error("invalid voice config: {0}")]
    InvalidVoice(String),
    #[error("HIT {0} is not a multimodal HIT")]
    NotMultimodal(String),
    #[error("item {item_index}: {source}")]
    Item {
        item_index: usize,
        #[source]
        source: Box<TtsError>,
    },
    #[error("asset store: {0}")]
    Io(#[from] std::io::Error),
}

impl TtsError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TtsError::ProviderUnavailable(_) => true,
            TtsError::Item { source, .. } => source.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Cloud,
    Stub,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cloud" => Ok(ProviderKind::Cloud),
            "stub" => Ok(ProviderKind::Stub),
            other => Err(format!("unknown TTS provider {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceConfig {
    pub provider: ProviderKind,
    pub voice_name: String,
    pub speaking_rate: f64,
    pub language_tag: String,
}

impl Default for VoiceConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Stub,
            voice_name: "en-US-Standard-C".into(),
            speaking_rate: 1.0,
            language_tag: "en-US".into(),
        }
    }
}

impl VoiceConfig {
    pub fn validate(&self) -> Result<(), TtsError> {
        if !(0.25..=4.0).contains(&self.speaking_rate) {
            return Err(TtsError::InvalidVoice(format!("speaking_rate {} outside [0.25, 4.0]", self.speaking_rate)));
        }
        Ok(())
    }

    /// Content hash identifying the rendering of `text` with this voice.
    pub fn asset_id(&self, text: &str) -> String {
        let provider = match self.provider {
            ProviderKind::Cloud => "cloud",
            ProviderKind::Stub => "stub",
        };
        let rate = format!("{:?}", self.speaking_rate);
        content_hash(&["mmda-tts-v1", provider, &self.voice_name, &rate, &self.language_tag, text])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioAsset {
    pub asset_id: String,
    #[serde(skip)]
    pub media: Vec<u8>,
    pub format: MediaFormat,
    pub duration_ms: u64,
    pub text: String,
}

/// Provider output before it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub media: Vec<u8>,
    pub format: MediaFormat,
    pub duration_ms: u64,
}

pub trait TtsProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn char_limit(&self) -> usize {
        DEFAULT_CHAR_LIMIT
    }

    fn render(&self, text: &str, voice: &VoiceConfig) -> Result<Rendered, TtsError>;
}

impl<P: TtsProvider + ?Sized> TtsProvider for Box<P> {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }

    fn char_limit(&self) -> usize {
        (**self).char_limit()
    }

    fn render(&self, text: &str, voice: &VoiceConfig) -> Result<Rendered, TtsError> {
        (**self).render(text, voice)
    }
}

/// Offline provider: 60 ms of tone per character, clamped to [500 ms, 60 s].
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

pub fn stub_duration_ms(text: &str) -> u64 {
    (text.chars().count() as u64 * 60).clamp(500, 60_000)
}

/// Sine approximation in integer arithmetic (Bhaskara I), so the waveform is
/// bit-identical on every platform. `deg` in [0, 360), result in [-32767, 32767].
fn int_sine(deg: u64) -> i64 {
    let (d, sign) = if deg < 180 { (deg as i64, 1) } else { (deg as i64 - 180, -1) };
    let p = d * (180 - d);
    sign * 4 * p * 32767 / (40500 - p)
}

fn wav_pcm16(samples: &[i16]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Duration of a PCM WAV blob, from its `fmt ` and `data` chunks.
pub fn wav_duration_ms(wav: &[u8]) -> Option<u64> {
    if wav.len() < 12 || &wav[..4] != b"RIFF" || &wav[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    let mut byte_rate = None;
    while pos + 8 <= wav.len() {
        let id = &wav[pos..pos + 4];
        let len = u32::from_le_bytes(wav[pos + 4..pos + 8].try_into().ok()?) as usize;
        let body = pos + 8;
        if id == b"fmt " && body + 12 <= wav.len() {
            byte_rate = Some(u32::from_le_bytes(wav[body + 8..body + 12].try_into().ok()?) as u64);
        }
        if id == b"data" {
            let len = len.min(wav.len() - body) as u64;
            return byte_rate.filter(|r| *r > 0).map(|r| len * 1000 / r);
        }
        pos = body + len + (len & 1);
    }
    None
}

impl TtsProvider for StubProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Stub
    }

    fn render(&self, text: &str, _voice: &VoiceConfig) -> Result<Rendered, TtsError> {
        let duration_ms = stub_duration_ms(text);
        let per_char = (SAMPLE_RATE as u64 * 60 / 1000) as usize;
        let total = (SAMPLE_RATE as u64 * duration_ms / 1000) as usize;
        let mut samples = vec![0i16; total];
        for (ci, ch) in text.chars().enumerate() {
            let start = ci * per_char;
            if start >= total {
                break;
            }
            if ch.is_whitespace() {
                continue;
            }
            let freq = 180 + (ch as u64 % 32) * 15;
            for (n, s) in samples[start..(start + per_char).min(total)].iter_mut().enumerate() {
                let deg = (freq * n as u64 * 360 / SAMPLE_RATE as u64) % 360;
                *s = (int_sine(deg) / 4) as i16;
            }
        }
        Ok(Rendered { media: wav_pcm16(&samples), format: MediaFormat::WavPcm16, duration_ms })
    }
}

/// Hosted synthesis over HTTPS JSON.
///
/// Request: `POST {endpoint}/v1/text:synthesize?key=…` with
/// `{"input":{"text"},"voice":{"languageCode","name"},"audioConfig":{"audioEncoding":"LINEAR16","speakingRate"}}`;
/// response `{"audioContent": <base64 WAV>}`.
pub struct CloudProvider {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
    char_limit: usize,
}

impl CloudProvider {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
            char_limit: DEFAULT_CHAR_LIMIT,
        }
    }

    /// Reads the key from `TTS_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, TtsError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| TtsError::AuthFailure(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(endpoint, key))
    }

    pub fn with_char_limit(mut self, limit: usize) -> Self {
        self.char_limit = limit;
        self
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SynthesizeResponse {
    audio_content: String,
}

impl TtsProvider for CloudProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Cloud
    }

    fn char_limit(&self) -> usize {
        self.char_limit
    }

    fn render(&self, text: &str, voice: &VoiceConfig) -> Result<Rendered, TtsError> {
        let body = serde_json::json!({
            "input": { "text": text },
            "voice": { "languageCode": voice.language_tag, "name": voice.voice_name },
            "audioConfig": { "audioEncoding": "LINEAR16", "speakingRate": voice.speaking_rate },
        });
        let url = format!("{}/v1/text:synthesize", self.endpoint);
        let resp = self.agent.post(&url).query("key", &self.api_key).send_json(body);
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code @ (401 | 403), r)) => {
                return Err(TtsError::AuthFailure(format!("HTTP {code}: {}", r.into_string().unwrap_or_default())))
            }
            Err(ureq::Error::Status(code, r)) if code == 429 || code >= 500 => {
                return Err(TtsError::ProviderUnavailable(format!("HTTP {code}: {}", r.into_string().unwrap_or_default())))
            }
            Err(ureq::Error::Status(code, r)) => {
                return Err(TtsError::ProviderRejected(format!("HTTP {code}: {}", r.into_string().unwrap_or_default())))
            }
            Err(ureq::Error::Transport(t)) => return Err(TtsError::ProviderUnavailable(t.to_string())),
        };
        let parsed: SynthesizeResponse =
            resp.into_json().map_err(|e| TtsError::ProviderRejected(format!("bad response body: {e}")))?;
        let media = base64::engine::general_purpose::STANDARD
            .decode(parsed.audio_content)
            .map_err(|e| TtsError::ProviderRejected(format!("bad audioContent: {e}")))?;
        let duration_ms = wav_duration_ms(&media)
            .ok_or_else(|| TtsError::ProviderRejected("audioContent is not a PCM WAV".into()))?;
        Ok(Rendered { media, format: MediaFormat::WavPcm16, duration_ms })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    pub provider_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSynthesis {
    pub hit: Hit,
    /// Listening time for the whole HIT.
    pub total_duration_ms: u64,
    pub stats: SynthStats,
}

pub struct TtsGateway<P> {
    store: Arc<AssetStore>,
    provider: P,
    provider_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl<P: TtsProvider> TtsGateway<P> {
    pub fn new(store: Arc<AssetStore>, provider: P) -> Self {
        Self { store, provider, provider_calls: AtomicUsize::new(0), cache_hits: AtomicUsize::new(0) }
    }

    pub fn store(&self) -> &Arc<AssetStore> {
        &self.store
    }

    pub fn stats(&self) -> SynthStats {
        SynthStats {
            provider_calls: self.provider_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    fn cached(&self, asset_id: &str) -> Result<Option<AudioAsset>, TtsError> {
        Ok(self.store.read(asset_id)?.map(|(entry, media)| AudioAsset {
            asset_id: asset_id.to_string(),
            media,
            format: entry.format,
            duration_ms: entry.duration_ms,
            text: entry.text,
        }))
    }

    pub fn synthesize(&self, text: &str, voice: &VoiceConfig) -> Result<AudioAsset, TtsError> {
        if text.is_empty() {
            return Err(TtsError::TextTooShort);
        }
        let len = text.chars().count();
        if len > self.provider.char_limit() {
            return Err(TtsError::TextTooLong { len, limit: self.provider.char_limit() });
        }
        voice.validate()?;
        if voice.provider != self.provider.kind() {
            return Err(TtsError::InvalidVoice(format!(
                "voice asks for {:?} but the gateway provider is {:?}",
                voice.provider,
                self.provider.kind()
            )));
        }
        let asset_id = voice.asset_id(text);
        if let Some(hit) = self.cached(&asset_id)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let lock = self.store.writer_lock(&asset_id);
        let _guard = lock.lock().expect("asset lock poisoned");
        // another writer may have finished while we waited
        if let Some(hit) = self.cached(&asset_id)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        self.provider_calls.fetch_add(1, Ordering::SeqCst);
        let rendered = self.provider.render(text, voice)?;
        let entry = IndexEntry {
            format: rendered.format,
            duration_ms: rendered.duration_ms,
            bytes: rendered.media.len() as u64,
            text: text.to_string(),
        };
        self.store.put(&asset_id, entry, &rendered.media)?;
        Ok(AudioAsset {
            asset_id,
            media: rendered.media,
            format: rendered.format,
            duration_ms: rendered.duration_ms,
            text: text.to_string(),
        })
    }

    /// Fills `audio_ref` on every item (genuine and QC) of a multimodal HIT.
    pub fn synthesize_hit(&self, hit: &Hit, voice: &VoiceConfig) -> Result<HitSynthesis, TtsError> {
        if hit.condition != Condition::Multimodal {
            return Err(TtsError::NotMultimodal(hit.hit_id.clone()));
        }
        let before = self.stats();
        let mut out = hit.clone();
        let mut total = 0;
        for item in &mut out.items {
            let asset = self
                .synthesize(&item.shown_text, voice)
                .map_err(|e| TtsError::Item { item_index: item.item_index, source: Box::new(e) })?;
            total += asset.duration_ms;
            item.audio_ref = Some(asset.asset_id);
        }
        let after = self.stats();
        Ok(HitSynthesis {
            hit: out,
            total_duration_ms: total,
            stats: SynthStats {
                provider_calls: after.provider_calls - before.provider_calls,
                cache_hits: after.cache_hits - before.cache_hits,
            },
        })
    }

    /// Synthesizes many texts with at most `parallelism` concurrent requests.
    /// Results are in input order.
    pub fn synthesize_many(
        &self,
        texts: &[&str],
        voice: &VoiceConfig,
        parallelism: usize,
    ) -> Vec<Result<AudioAsset, TtsError>> {
        let next = AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Result<AudioAsset, TtsError>>>> =
            texts.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..parallelism.max(1).min(texts.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= texts.len() {
                        break;
                    }
                    let r = self.synthesize(texts[i], voice);
                    *results[i].lock().expect("result slot poisoned") = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().expect("result slot poisoned").expect("every slot filled"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hitgen::{HitItem, ItemKind};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn gateway() -> (tempfile::TempDir, TtsGateway<StubProvider>) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(AssetStore::open(dir.path().join("assets")).unwrap());
        (dir, TtsGateway::new(store, StubProvider))
    }

    #[test]
    fn hello_world_stub_duration() {
        let (_d, gw) = gateway();
        let a = gw.synthesize("hello world", &VoiceConfig::default()).unwrap();
        assert_eq!(a.format, MediaFormat::WavPcm16);
        assert_eq!(a.duration_ms, 660);
        assert_eq!(wav_duration_ms(&a.media), Some(660));
    }

    #[test]
    fn stub_duration_bounds() {
        assert_eq!(stub_duration_ms("hi"), 500);
        assert_eq!(stub_duration_ms(&"x".repeat(2000)), 60_000);
    }

    #[test]
    fn second_call_served_from_cache() {
        let (_d, gw) = gateway();
        let a = gw.synthesize("hello world", &VoiceConfig::default()).unwrap();
        let b = gw.synthesize("hello world", &VoiceConfig::default()).unwrap();
        assert_eq!(a.asset_id, b.asset_id);
        assert_eq!(a.media, b.media);
        assert_eq!(gw.stats(), SynthStats { provider_calls: 1, cache_hits: 1 });
    }

    #[test]
    fn empty_and_oversized_text() {
        let (_d, gw) = gateway();
        assert!(matches!(gw.synthesize("", &VoiceConfig::default()), Err(TtsError::TextTooShort)));
        let long = "a".repeat(DEFAULT_CHAR_LIMIT + 1);
        assert!(matches!(gw.synthesize(&long, &VoiceConfig::default()), Err(TtsError::TextTooLong { .. })));
    }

    #[test]
    fn voice_validation() {
        let (_d, gw) = gateway();
        let fast = VoiceConfig { speaking_rate: 5.0, ..VoiceConfig::default() };
        assert!(matches!(gw.synthesize("hi there", &fast), Err(TtsError::InvalidVoice(_))));
        let cloud = VoiceConfig { provider: ProviderKind::Cloud, ..VoiceConfig::default() };
        assert!(matches!(gw.synthesize("hi there", &cloud), Err(TtsError::InvalidVoice(_))));
    }

    #[test]
    fn asset_id_depends_on_voice() {
        let v = VoiceConfig::default();
        let slow = VoiceConfig { speaking_rate: 0.9, ..v.clone() };
        assert_ne!(v.asset_id("x y"), slow.asset_id("x y"));
        assert_eq!(v.asset_id("x y"), v.clone().asset_id("x y"));
    }

    #[test]
    fn stub_bytes_are_stable() {
        let a = StubProvider.render("Guten Tag, world!", &VoiceConfig::default()).unwrap();
        let b = StubProvider.render("Guten Tag, world!", &VoiceConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.media[..4], b"RIFF");
        assert_eq!(a.media.len(), 44 + 2 * 16 * a.duration_ms as usize);
        assert_eq!(int_sine(90), 32767);
        assert_eq!(int_sine(0), 0);
        assert_eq!(int_sine(270), -32767);
    }

    fn item(i: usize, kind: ItemKind, text: &str, origin: Option<usize>) -> HitItem {
        HitItem {
            item_index: i,
            kind,
            system_id: "S".into(),
            seg_id: format!("seg{}", origin.unwrap_or(i)),
            doc_id: "d".into(),
            position: 0,
            shown_text: text.into(),
            reference_text: "ref".into(),
            origin_index: origin,
            audio_ref: None,
            image_ref: None,
        }
    }

    fn hit_with_repeats() -> Hit {
        let mut items: Vec<HitItem> =
            (0..90).map(|i| item(i, ItemKind::Genuine, &format!("translation number {i}"), None)).collect();
        for i in 90..100 {
            items.push(item(i, ItemKind::AskAgain, &format!("translation number {}", i - 90), Some(i - 90)));
        }
        Hit { hit_id: "mm-0000".into(), condition: Condition::Multimodal, seed: 0, items }
    }

    #[test]
    fn hit_synthesis_reuses_repeats() {
        let (_d, gw) = gateway();
        let out = gw.synthesize_hit(&hit_with_repeats(), &VoiceConfig::default()).unwrap();
        assert!(out.hit.items.iter().all(|i| i.audio_ref.is_some()));
        assert_eq!(out.stats, SynthStats { provider_calls: 90, cache_hits: 10 });
        assert_eq!(out.hit.items[95].audio_ref, out.hit.items[5].audio_ref);
        assert!(out.total_duration_ms >= 100 * 500);
    }

    #[test]
    fn text_only_hit_rejected() {
        let (_d, gw) = gateway();
        let mut h = hit_with_repeats();
        h.condition = Condition::TextOnly;
        assert!(matches!(gw.synthesize_hit(&h, &VoiceConfig::default()), Err(TtsError::NotMultimodal(_))));
    }

    struct FailsOn(&'static str);

    impl TtsProvider for FailsOn {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Stub
        }

        fn render(&self, text: &str, voice: &VoiceConfig) -> Result<Rendered, TtsError> {
            if text == self.0 {
                return Err(TtsError::ProviderUnavailable("simulated outage".into()));
            }
            StubProvider.render(text, voice)
        }
    }

    #[test]
    fn failure_names_item_and_keeps_progress() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(AssetStore::open(dir.path()).unwrap());
        let gw = TtsGateway::new(store.clone(), FailsOn("translation number 37"));
        let err = gw.synthesize_hit(&hit_with_repeats(), &VoiceConfig::default()).unwrap_err();
        assert!(matches!(err, TtsError::Item { item_index: 37, .. }), "{err}");
        assert!(err.is_retryable());
        assert_eq!(store.len(), 37);

        let retry = TtsGateway::new(store.clone(), StubProvider);
        let out = retry.synthesize_hit(&hit_with_repeats(), &VoiceConfig::default()).unwrap();
        assert_eq!(out.stats.provider_calls, 90 - 37);
    }

    #[test]
    fn shared_segments_share_assets() {
        let (_d, gw) = gateway();
        let one = gw.synthesize_hit(&hit_with_repeats(), &VoiceConfig::default()).unwrap();
        let mut other = hit_with_repeats();
        other.hit_id = "mm-0001".into();
        let two = gw.synthesize_hit(&other, &VoiceConfig::default()).unwrap();
        assert_eq!(two.stats.provider_calls, 0);
        assert_eq!(one.hit.items[3].audio_ref, two.hit.items[3].audio_ref);
    }

    #[test]
    fn concurrent_requests_render_once() {
        let (_d, gw) = gateway();
        let texts: Vec<&str> = std::iter::repeat("same words every time").take(32).collect();
        let out = gw.synthesize_many(&texts, &VoiceConfig::default(), 8);
        assert!(out.iter().all(|r| r.is_ok()));
        assert_eq!(gw.stats().provider_calls, 1);
    }

    /// Serves one canned HTTP response and returns the raw request.
    fn one_shot_server(status: &str, body: String) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            sock.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&buf).into_owned()
        });
        (addr, handle)
    }

    #[test]
    fn cloud_provider_decodes_audio() {
        let wav = StubProvider.render("hello world", &VoiceConfig::default()).unwrap().media;
        let body = serde_json::json!({ "audioContent": base64::engine::general_purpose::STANDARD.encode(&wav) }).to_string();
        let (addr, server) = one_shot_server("200 OK", body);
        let cloud = CloudProvider::new(addr, "secret");
        let voice = VoiceConfig { provider: ProviderKind::Cloud, ..VoiceConfig::default() };
        let out = cloud.render("hello world", &voice).unwrap();
        assert_eq!(out.duration_ms, 660);
        assert_eq!(out.media, wav);
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/text:synthesize?key=secret"), "{request}");
        assert!(request.contains("\"audioEncoding\":\"LINEAR16\""));
        assert!(request.contains("\"languageCode\":\"en-US\""));
    }

    #[test]
    fn cloud_provider_error_mapping() {
        let voice = VoiceConfig { provider: ProviderKind::Cloud, ..VoiceConfig::default() };
        let (addr, server) = one_shot_server("403 Forbidden", "{}".into());
        assert!(matches!(CloudProvider::new(addr, "k").render("x y z", &voice), Err(TtsError::AuthFailure(_))));
        server.join().unwrap();
        let (addr, server) = one_shot_server("503 Service Unavailable", "{}".into());
        let err = CloudProvider::new(addr, "k").render("x y z", &voice).unwrap_err();
        assert!(err.is_retryable(), "{err}");
        server.join().unwrap();
        let dead = CloudProvider::new("http://127.0.0.1:9", "k").render("x y z", &voice).unwrap_err();
        assert!(matches!(dead, TtsError::ProviderUnavailable(_)));
    }
}
