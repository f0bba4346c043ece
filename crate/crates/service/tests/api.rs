use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use mmda_core::assets::AssetStore;
use mmda_core::hitgen::{Condition, Hit};
use mmda_core::raster::render_hit_rasters;
use mmda_core::sim::{planted_scenario, population, simulate_session, PersonaParams, SimWorker};
use mmda_core::tts::{StubProvider, TtsGateway, VoiceConfig};
use mmda_core::workdir::{save_hits, Workdir};
use mmda_service::{router, AppState, Clock};

struct Fixture {
    _dir: tempfile::TempDir,
    wd: Workdir,
    hits: Vec<Hit>,
    qualities: BTreeMap<String, f64>,
    clock: Arc<AtomicU64>,
}

impl Fixture {
    fn new(condition: Condition, n_hits: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let wd = Workdir::new(dir.path());
        let sc = planted_scenario(3, 4.0, 30 * n_hits.max(1), condition, 21).unwrap();
        let mut hits = sc.hits.clone();
        assert!(hits.len() >= n_hits, "scenario produced {} hits", hits.len());
        hits.truncate(n_hits);
        let store = Arc::new(AssetStore::open(wd.assets()).unwrap());
        let hits: Vec<Hit> = match condition {
            Condition::TextOnly => hits.iter().map(|h| render_hit_rasters(&store, h).unwrap()).collect(),
            Condition::Multimodal => {
                let gw = TtsGateway::new(store, StubProvider);
                hits.iter().map(|h| gw.synthesize_hit(h, &VoiceConfig::default()).unwrap().hit).collect()
            }
        };
        save_hits(&wd.hits("camp"), &hits).unwrap();
        Self { _dir: dir, wd, hits, qualities: sc.qualities, clock: Arc::new(AtomicU64::new(1_000_000)) }
    }

    fn app(&self) -> Router {
        let c = self.clock.clone();
        let clock: Clock = Arc::new(move || c.load(Ordering::SeqCst));
        router(AppState::open(self.wd.clone(), clock).unwrap())
    }
}

async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn raw(app: &Router, uri: &str) -> (StatusCode, Option<String>, Vec<u8>) {
    let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let ct = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let status = resp.status();
    (status, ct, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn judgment(j: &mmda_core::qc::SessionJudgment) -> Value {
    json!({ "item_index": j.item_index, "score": j.score, "elapsed_ms": j.elapsed_ms, "slider_moved": j.slider_moved })
}

async fn create_and_open(app: &Router, condition: &str) {
    let (s, _) = call(app, Method::POST, "/campaigns", None, Some(json!({ "campaign_id": "camp", "condition": condition }))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, body) = call(app, Method::POST, "/campaigns/camp/open", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["state"], "open");
}

async fn complete_hit(app: &Router, fx: &Fixture, worker: &SimWorker) -> String {
    let (s, payload) = call(app, Method::GET, "/campaigns/camp/next-hit", Some(&worker.worker_id), None).await;
    assert_eq!(s, StatusCode::OK, "{payload}");
    let hit = fx.hits.iter().find(|h| h.hit_id == payload["hit_id"]).unwrap();
    let session = simulate_session(worker, hit, &fx.qualities, &PersonaParams::default(), 5);
    let id = payload["assignment_id"].as_str().unwrap().to_string();
    for j in &session.judgments {
        let (s, ack) = call(app, Method::POST, &format!("/assignments/{id}/judgments"), Some(&worker.worker_id), Some(judgment(j))).await;
        assert_eq!(s, StatusCode::OK, "{ack}");
    }
    id
}

#[tokio::test]
async fn text_only_campaign_round_trip() {
    let fx = Fixture::new(Condition::TextOnly, 1);
    let app = fx.app();
    let (s, body) = call(&app, Method::POST, "/campaigns", None, Some(json!({ "campaign_id": "camp", "condition": "text_only" }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(body["state"], "draft");
    assert_eq!(body["v"], 1);
    let (s, body) = call(&app, Method::POST, "/campaigns", None, Some(json!({ "campaign_id": "camp", "condition": "text_only" }))).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::CONFLICT, Some("conflict")));

    let (s, body) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w1"), None).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::CONFLICT, Some("not_open")));
    call(&app, Method::POST, "/campaigns/camp/open", None, None).await;

    let (s, _) = call(&app, Method::GET, "/campaigns/camp/next-hit", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let (s, payload) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(payload["v"], 1);
    assert_eq!(payload["cursor"], 0);
    let items = payload["items"].as_array().unwrap();
    assert_eq!(items.len(), 100);
    assert!(items.iter().all(|i| i["image_url"].is_string() && i.get("audio_url").is_none()));
    let text = payload.to_string();
    for item in &fx.hits[0].items {
        assert!(!text.contains(&item.shown_text), "hypothesis leaked into payload");
    }
    for forbidden in ["system_id", "kind", "bad_reference", "ask_again", "origin_index"] {
        assert!(!text.contains(forbidden), "{forbidden} leaked into payload");
    }
    let (status, ct, png) = raw(&app, items[0]["image_url"].as_str().unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ct.as_deref(), Some("image/png"));
    assert_eq!(&png[1..4], b"PNG");

    let id = payload["assignment_id"].as_str().unwrap().to_string();
    let (s, body) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w1"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["detail"]["assignment_id"], id);

    let url = format!("/assignments/{id}/judgments");
    let j = |i: usize, score: f64| json!({ "item_index": i, "score": score, "elapsed_ms": 4000, "slider_moved": true });
    let (s, ack) = call(&app, Method::POST, &url, Some("w1"), Some(j(0, 40.0))).await;
    assert_eq!((s, ack["next_item_index"].as_u64()), (StatusCode::OK, Some(1)));
    let (s, body) = call(&app, Method::POST, &url, Some("w1"), Some(j(3, 40.0))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["detail"], json!({ "expected": 1, "got": 3 }));
    let (s, body) = call(&app, Method::POST, &url, Some("w1"), Some(j(1, 101.0))).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("score_out_of_range")));
    let (s, _) = call(&app, Method::POST, &url, Some("intruder"), Some(j(1, 50.0))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = call(&app, Method::POST, &url, Some("w1"), Some(json!({ "item_index": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, resumed) = call(&app, Method::GET, &format!("/assignments/{id}"), Some("w1"), None).await;
    assert_eq!((s, resumed["cursor"].as_u64()), (StatusCode::OK, Some(1)));

    for i in 1..100 {
        let (s, ack) = call(&app, Method::POST, &url, Some("w1"), Some(j(i, 40.0 + (i % 7) as f64))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(ack["completed"], i == 99);
    }
    let (s, _) = call(&app, Method::POST, &url, Some("w1"), Some(j(100, 40.0))).await;
    assert_eq!(s, StatusCode::GONE);
    let (s, _) = call(&app, Method::POST, &format!("/assignments/{id}/feedback"), Some("w1"), Some(json!({ "text": "fine" }))).await;
    assert_eq!(s, StatusCode::OK);

    let (s, body) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w2"), None).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("no_hits_available")));

    let (s, body) = call(&app, Method::POST, "/campaigns/camp/analyze", None, None).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::CONFLICT, Some("campaign_not_closed")));
    let (s, _) = call(&app, Method::GET, "/campaigns/camp/report", None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    call(&app, Method::POST, "/campaigns/camp/close", None, None).await;
    let (s, out) = call(&app, Method::POST, "/campaigns/camp/analyze", None, None).await;
    assert_eq!(s, StatusCode::OK, "{out}");
    assert_eq!(out["sessions"], 1);
    let (s, report) = call(&app, Method::GET, "/campaigns/camp/report", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report["analysis"]["campaign_id"], "camp");
    assert!(report["ranking"].is_array());
    let (_, info) = call(&app, Method::GET, "/campaigns/camp", None, None).await;
    assert_eq!(info["state"], "analyzed");
}

#[tokio::test]
async fn multimodal_payload_carries_audio_only() {
    let fx = Fixture::new(Condition::Multimodal, 1);
    let app = fx.app();
    create_and_open(&app, "multimodal").await;
    let (_, payload) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w1"), None).await;
    let items = payload["items"].as_array().unwrap();
    assert!(items.iter().all(|i| i["audio_url"].is_string() && i.get("image_url").is_none()));
    let text = payload.to_string();
    for item in &fx.hits[0].items {
        assert!(!text.contains(&item.shown_text));
    }
    let audio = items[0]["audio_url"].as_str().unwrap();
    let (status, ct, wav) = raw(&app, audio).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ct.as_deref(), Some("audio/wav"));
    assert_eq!(&wav[..4], b"RIFF");
    // audio ids are not served as rasters and vice versa
    let (status, _, _) = raw(&app, &audio.replace("/assets/", "/rasters/")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = raw(&app, "/assets/..%2f..%2fetc%2fpasswd").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn missing_audio_is_reported_with_item() {
    let fx = Fixture::new(Condition::Multimodal, 1);
    let mut hit = fx.hits[0].clone();
    hit.items[12].audio_ref = Some("f".repeat(64));
    save_hits(&fx.wd.hits("camp"), &[hit.clone()]).unwrap();
    let app = fx.app();
    let (s, body) = call(&app, Method::POST, "/campaigns", None, Some(json!({ "campaign_id": "camp", "condition": "multimodal" }))).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("missing_audio")));
    assert_eq!(body["detail"], json!({ "hit_id": hit.hit_id, "item_index": 12 }));
}

#[tokio::test]
async fn restart_resumes_from_event_log() {
    let fx = Fixture::new(Condition::TextOnly, 2);
    let app = fx.app();
    create_and_open(&app, "text_only").await;
    let workers = population(1, 0, 0);
    let done = complete_hit(&app, &fx, &workers[0]).await;
    let (_, payload) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w2"), None).await;
    let id = payload["assignment_id"].as_str().unwrap().to_string();
    for i in 0..7 {
        let j = json!({ "item_index": i, "score": 55.0, "elapsed_ms": 3000, "slider_moved": true });
        call(&app, Method::POST, &format!("/assignments/{id}/judgments"), Some("w2"), Some(j)).await;
    }
    let (_, before) = call(&app, Method::GET, "/campaigns/camp", None, None).await;
    drop(app);

    let app = fx.app();
    let (_, after) = call(&app, Method::GET, "/campaigns/camp", None, None).await;
    assert_eq!(before, after);
    let (s, resumed) = call(&app, Method::GET, &format!("/assignments/{id}"), Some("w2"), None).await;
    assert_eq!((s, resumed["cursor"].as_u64()), (StatusCode::OK, Some(7)));
    let j = json!({ "item_index": 7, "score": 55.0, "elapsed_ms": 3000, "slider_moved": true });
    let (s, ack) = call(&app, Method::POST, &format!("/assignments/{id}/judgments"), Some("w2"), Some(j)).await;
    assert_eq!((s, ack["next_item_index"].as_u64()), (StatusCode::OK, Some(8)));
    let (s, _) = call(&app, Method::GET, &format!("/assignments/{done}"), Some(&workers[0].worker_id), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn abandoned_lease_returns_hit() {
    let fx = Fixture::new(Condition::TextOnly, 1);
    let app = fx.app();
    create_and_open(&app, "text_only").await;
    let (_, first) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w1"), None).await;
    let (s, _) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w2"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    fx.clock.fetch_add(mmda_core::campaign::DEFAULT_LEASE_MS, Ordering::SeqCst);
    let (s, second) = call(&app, Method::GET, "/campaigns/camp/next-hit", Some("w2"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["hit_id"], second["hit_id"]);
    let id = first["assignment_id"].as_str().unwrap();
    let j = json!({ "item_index": 0, "score": 5.0, "elapsed_ms": 3000, "slider_moved": true });
    let (s, body) = call(&app, Method::POST, &format!("/assignments/{id}/judgments"), Some("w1"), Some(j)).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::GONE, Some("stale_assignment")));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_never_share_a_hit() {
    let fx = Fixture::new(Condition::TextOnly, 4);
    let app = fx.app();
    create_and_open(&app, "text_only").await;
    let mut tasks = Vec::new();
    for w in 0..16 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            call(&app, Method::GET, "/campaigns/camp/next-hit", Some(&format!("worker-{w}")), None).await
        }));
    }
    let mut assigned = BTreeSet::new();
    let mut refused = 0;
    for t in tasks {
        let (s, body) = t.await.unwrap();
        match s {
            StatusCode::OK => assert!(assigned.insert(body["hit_id"].as_str().unwrap().to_string())),
            StatusCode::NOT_FOUND => refused += 1,
            other => panic!("unexpected status {other}"),
        }
    }
    assert_eq!(assigned.len(), 4);
    assert_eq!(refused, 12);
}

#[tokio::test]
async fn static_bundle_is_confined() {
    let fx = Fixture::new(Condition::TextOnly, 1);
    let ui = fx.wd.root().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html></html>").unwrap();
    let c = fx.clock.clone();
    let state = AppState::open(fx.wd.clone(), Arc::new(move || c.load(Ordering::SeqCst))).unwrap().with_static_dir(&ui);
    let app = router(state);
    let (s, ct, body) = raw(&app, "/ui").await;
    assert_eq!((s, ct.as_deref(), body.as_slice()), (StatusCode::OK, Some("text/html; charset=utf-8"), &b"<html></html>"[..]));
    let (s, _, _) = raw(&app, "/ui/../run.json").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
