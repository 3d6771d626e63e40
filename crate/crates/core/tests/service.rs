use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hydrowatch::dsp::AudioSegment;
use hydrowatch::localization::{ArrayGeometry, Point};
use hydrowatch::nnet::{Autoencoder, AutoencoderConfig, Mlp, MlpConfig};
use hydrowatch::risk::{RiskLevel, RiskPolicy};
use hydrowatch::service::{router, ModelSet, ObservationQuery, Service, ServiceConfig, Stage};
use hydrowatch::sim::{render_scene, EventClass, EventSpec, Scene, SceneEvent};

const SR: u32 = 96_000;

fn models(id: &str, seed: u64) -> ModelSet {
    let ae_cfg = AutoencoderConfig { hidden: 4, dropout: 0.0, ..AutoencoderConfig::default() };
    let ae = Autoencoder::new(ae_cfg.clone(), seed).unwrap();
    let mlp = Mlp::new(
        MlpConfig { input: ae_cfg.latent_size(), hidden: vec![8], classes: 10, ..MlpConfig::default() },
        seed,
    )
    .unwrap();
    ModelSet::new(id, ae, mlp, EventClass::names()).unwrap()
}

fn open(dir: &std::path::Path) -> Arc<Service> {
    Service::open(ServiceConfig::new(dir), models("tiny", 1), RiskPolicy::default()).unwrap()
}

fn scene(class: EventClass, at: Point, seed: u64, loudness_db: f64) -> Vec<AudioSegment> {
    let mut spec = EventSpec::new(class, 2.0, seed).with_sample_rate(SR);
    spec.loudness_db = loudness_db;
    let s = Scene {
        geometry: ArrayGeometry::default(),
        duration_s: 6.0,
        sample_rate: SR,
        events: vec![SceneEvent { spec, position: at, onset_s: 1.0 }],
        noise_floor_db: Some(-80.0),
        seed,
    };
    render_scene(&s).unwrap().channels
}

fn silence() -> Vec<AudioSegment> {
    (1..=3).map(|i| AudioSegment::new(vec![0.0; 6 * SR as usize], SR, format!("H{i}"))).collect()
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

#[test]
fn silent_buffer_gives_normal_record_without_location() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let r = svc.process(&silence()).unwrap();
    assert!(r.silent);
    assert_eq!(r.level(), RiskLevel::Normal);
    assert!(r.location.is_none());
    assert!(r.stage_errors.iter().any(|e| e.stage == Stage::Localize && e.message.contains("signal")));
    let p: Vec<f64> = r.class_probs.values().copied().collect();
    let spread = p.iter().cloned().fold(f64::MIN, f64::max) - p.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-12);
}

#[test]
fn loud_event_near_wall_alarms_and_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let mut policy = (*svc.policy()).clone();
    policy.anomaly_threshold = 0.1;
    svc.update_policy(policy).unwrap();
    let src = Point::new(12.0, 4.0);
    let r = svc.process(&scene(EventClass::HighRiskDanger, src, 3, -6.0)).unwrap();
    let loc = r.location.as_ref().expect("located");
    let tol = loc.grid_step + 1430.0 / f64::from(SR);
    assert!(loc.position.distance(src) <= tol, "{:?} vs {src:?}", loc.position);
    // Untrained model: reconstruction error is well above the lowered threshold.
    assert!(r.anomaly_flag, "score {:?}", r.anomaly_score);
    assert_eq!(r.level(), RiskLevel::Alarm);
    assert!(r.assessment.trace.iter().any(|t| t.rule == "anomaly_near_wall"));
}

#[test]
fn stage_timings_account_for_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let r = svc.process(&scene(EventClass::MetalClank, Point::new(-8.0, 6.0), 4, -6.0)).unwrap();
    let t = &r.timings;
    for v in [t.preprocess_ms, t.encode_ms, t.classify_ms, t.anomaly_ms, t.localize_ms, t.assess_ms] {
        assert!(v >= 0.0);
    }
    let sum = t.stage_sum_ms();
    assert!((sum - t.total_ms).abs() <= 0.05 * t.total_ms, "sum {sum} total {}", t.total_ms);
}

#[test]
fn policy_swap_only_affects_later_observations() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let a = svc.process(&silence()).unwrap();
    let mut p = RiskPolicy::default();
    p.anomaly_threshold = 3.0;
    let v = svc.update_policy(p).unwrap();
    assert_eq!(v, 2);
    let b = svc.process(&silence()).unwrap();
    assert_eq!(a.assessment.policy_version, 1);
    assert_eq!(b.assessment.policy_version, 2);
    assert_eq!(svc.observation(a.observation_id).unwrap().assessment.policy_version, 1);
    drop(svc);
    // The newest stored version survives a restart.
    assert_eq!(open(dir.path()).policy().version, 2);
}

#[tokio::test]
async fn label_is_durable_and_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let r = svc.process(&scene(EventClass::KnockWood, Point::new(3.0, 9.0), 5, -6.0)).unwrap();
    let app = router(svc.clone());

    let (st, ack) = call(
        &app,
        "POST",
        &format!("/observations/{}/label", r.observation_id),
        Some(json!({ "class": "knock_wood", "operator": "op1" })),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(ack["durable"], true);

    let (_, got) = call(&app, "GET", &format!("/observations/{}", r.observation_id), None).await;
    assert_eq!(got["label"], "knock_wood");
    let (_, manifest) = call(&app, "GET", "/manifest", None).await;
    let rows = manifest.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["sample_id"], r.observation_id);
    assert_eq!(rows[0]["label"], EventClass::KnockWood.id());

    drop(app);
    drop(svc);
    let reopened = open(dir.path());
    assert_eq!(reopened.observation(r.observation_id).unwrap().label.as_deref(), Some("knock_wood"));
    assert_eq!(reopened.training_manifest().len(), 1);

    let app = router(reopened);
    let (st, _) = call(&app, "POST", "/observations/999/label", Some(json!({ "class": 0, "operator": "x" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", &format!("/observations/{}/label", r.observation_id), Some(json!({ "class": "whale", "operator": "x" }))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

fn populated(dir: &std::path::Path) -> Arc<Service> {
    let svc = open(dir);
    let classes = [EventClass::KnockWood, EventClass::BubblesLarge, EventClass::MetalClank, EventClass::HighRiskDanger];
    for (i, c) in classes.iter().enumerate() {
        let at = Point::new(-30.0 + 20.0 * i as f64, 2.0 + 7.0 * i as f64);
        svc.process(&scene(*c, at, 10 + i as u64, -3.0 - 6.0 * i as f64)).unwrap();
    }
    svc.process(&silence()).unwrap();
    svc
}

#[tokio::test]
async fn what_if_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = populated(dir.path());
    let app = router(svc.clone());

    let (_, active) = call(&app, "GET", "/policy", None).await;
    let (st, same) = call(&app, "POST", "/policy/whatif", Some(active["policy"].clone())).await;
    assert_eq!(st, StatusCode::OK);
    assert!(same["delta"].as_object().unwrap().values().all(|d| d == 0));
    assert_eq!(same["changed"].as_array().unwrap().len(), 0);

    let scores: Vec<f64> = svc.observations_after(None).iter().filter_map(|r| r.anomaly_score).collect();
    let mut thresholds: Vec<f64> = scores.iter().flat_map(|s| [s - 1e-9, *s, s + 1e-9]).collect();
    thresholds.extend([0.0, 0.25, 0.5, 1.0, 10.0]);
    thresholds.sort_by(f64::total_cmp);
    let mut prev: Option<(usize, usize)> = None;
    for t in thresholds.into_iter().filter(|t| *t >= 0.0) {
        let mut draft = RiskPolicy::default();
        draft.anomaly_threshold = t;
        let (st, r) = call(&app, "POST", "/policy/whatif", Some(serde_json::to_value(&draft).unwrap())).await;
        assert_eq!(st, StatusCode::OK);
        let now = (r["draft_flagged"].as_u64().unwrap() as usize, r["draft_anomalies"].as_u64().unwrap() as usize);
        if let Some(p) = prev {
            assert!(now.0 <= p.0 && now.1 <= p.1, "threshold {t}: {now:?} after {p:?}");
        }
        prev = Some(now);
    }
}

#[tokio::test]
async fn policy_updates_are_validated_and_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(open(dir.path()));
    let mut bad = serde_json::to_value(RiskPolicy::default()).unwrap();
    bad["class_weights"]["knock_wood"] = json!(4.0);
    bad["priority"] = json!(["anomaly", "anomaly", "localization"]);
    let (st, err) = call(&app, "PUT", "/policy", Some(bad)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let errs: Vec<&str> = err["errors"].as_array().unwrap().iter().map(|e| e.as_str().unwrap()).collect();
    assert!(errs.iter().any(|e| e.starts_with("class_weights.knock_wood")));
    assert!(errs.iter().any(|e| e.starts_with("priority")));

    let mut missing = RiskPolicy::default();
    missing.class_weights.remove("metal_clank");
    let (st, err) = call(&app, "PUT", "/policy", Some(serde_json::to_value(&missing).unwrap())).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["errors"][0].as_str().unwrap().contains("class_weights.metal_clank"));

    let (st, _) = call(&app, "PUT", "/policy", Some(json!({ "version": 1 }))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let (st, ok) = call(&app, "PUT", "/policy", Some(serde_json::to_value(RiskPolicy::default().anomaly_first()).unwrap())).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(ok["version"], 2);
    let (_, cur) = call(&app, "GET", "/policy", None).await;
    assert_eq!(cur["version"], 2);
    assert_eq!(cur["policy"]["priority"][0], "anomaly");
}

#[tokio::test]
async fn anomaly_queue_is_score_ordered_and_pages_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let svc = populated(dir.path());
    let app = router(svc.clone());

    let flagged: Vec<_> = svc.observations_after(None).into_iter().filter(|r| r.anomaly_flag).collect();
    assert!(flagged.len() >= 2, "need a few flagged observations");
    let (_, page) = call(&app, "GET", "/observations?flag=anomaly", None).await;
    let scores: Vec<f64> = page["items"].as_array().unwrap().iter().map(|r| r["anomaly_score"].as_f64().unwrap()).collect();
    assert_eq!(scores.len(), flagged.len());
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    for order in ["score", "id"] {
        let mut seen = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let q = ObservationQuery {
                order: Some(order.into()),
                cursor: cursor.clone(),
                limit: Some(2),
                ..ObservationQuery::default()
            };
            let page = svc.query(&q).unwrap();
            seen.extend(page.items.iter().map(|r| r.observation_id));
            match page.next_cursor {
                Some(c) => cursor = Some(c),
                None => break,
            }
        }
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "{order}: {seen:?}");
        assert_eq!(seen.len(), 5);
    }
    let (st, _) = call(&app, "GET", "/observations?flag=bogus", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn models_can_be_listed_and_swapped() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    svc.register_model(models("other", 2));
    let app = router(svc.clone());
    let (_, list) = call(&app, "GET", "/models", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    let (st, _) = call(&app, "POST", "/models/activate", Some(json!({ "id": "missing" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/models/activate", Some(json!({ "id": "other" }))).await;
    assert_eq!(st, StatusCode::OK);
    let r = svc.process(&silence()).unwrap();
    assert_eq!(r.model_id, "other");
}

#[tokio::test]
async fn event_stream_replays_then_goes_live() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let first = svc.process(&silence()).unwrap();
    let app = router(svc.clone());
    let resp = app
        .clone()
        .oneshot(Request::get(format!("/events?since={}", first.observation_id)).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let mut body = resp.into_body();

    let worker = svc.clone();
    let live = tokio::task::spawn_blocking(move || {
        (0..2).map(|_| worker.process(&silence()).unwrap().observation_id).collect::<Vec<_>>()
    });

    let mut ids = Vec::new();
    let mut buf = String::new();
    while ids.len() < 3 {
        let frame = tokio::time::timeout(Duration::from_secs(60), body.frame())
            .await
            .expect("event within timeout")
            .expect("stream open")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            buf.push_str(std::str::from_utf8(&data).unwrap());
            while let Some(end) = buf.find("\n\n") {
                let block: String = buf.drain(..end + 2).collect();
                if let Some(line) = block.lines().find(|l| l.starts_with("data:")) {
                    let v: Value = serde_json::from_str(line.trim_start_matches("data:").trim()).unwrap();
                    ids.push(v["observation_id"].as_u64().unwrap());
                }
            }
        }
    }
    let mut expected = vec![first.observation_id];
    expected.extend(live.await.unwrap());
    assert_eq!(ids, expected);
}
