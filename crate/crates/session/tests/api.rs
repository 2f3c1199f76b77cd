use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use valign_core::mission::compute_metrics;
use valign_core::{
    recommend, run_simulated_mission, BetaTrustState, MissionConfig, MissionLog, PlanningContext, RewardWeights,
    SimulatedHuman, Strategy, TrustDynamicsParams, WeightBelief,
};
use valign_session::{router, AppState, Store};

struct Server {
    app: Router,
    clock: Arc<AtomicU64>,
}

fn server(dir: &Path) -> Server {
    let clock = Arc::new(AtomicU64::new(1_000_000));
    let c = clock.clone();
    let (store, stored) = Store::open(dir).unwrap();
    let state = AppState::new(store, stored, Arc::new(move || c.load(Ordering::SeqCst)), Duration::from_millis(20)).unwrap();
    Server {
        app: router(state),
        clock,
    }
}

impl Server {
    async fn raw(&self, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, String) {
        let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let body = body.map(|b| b.to_string()).unwrap_or_default();
        let (status, text) = self.raw(method, uri, body).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    async fn create(&self, body: Value) -> String {
        let (status, v) = self.call("POST", "/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["sessionId"].as_str().unwrap().to_string()
    }

    /// Plays one site following the recommendation.
    async fn play(&self, id: &str, value: u32) -> Value {
        let (_, b) = self.call("GET", &format!("/sessions/{id}/briefing"), None).await;
        let rec = b["recommendation"].clone();
        let (s, _) = self.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": rec }))).await;
        assert_eq!(s, StatusCode::OK);
        let (s, v) = self.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": value }))).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }

    async fn export(&self, id: &str) -> String {
        let (s, text) = self.raw("GET", &format!("/sessions/{id}/export"), Body::empty()).await;
        assert_eq!(s, StatusCode::OK, "{text}");
        text
    }
}

#[tokio::test]
async fn default_session_and_briefing() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let (status, v) = srv.call("POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["numSites"], 40);
    assert_eq!(v["health"], 100.0);
    assert_eq!(v["clockRemaining"], 1500.0);
    assert_eq!(v["phase"], "awaitingAction");
    assert!(v.get("strategy").is_none());
    let id = v["sessionId"].as_str().unwrap();

    let (s, b1) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b1["siteIndex"], 1);
    assert_eq!(b1["health"], 100.0);
    assert_eq!(b1["avgTimeWith"], 35.0);
    assert_eq!(b1["avgTimeWithout"], 20.0);
    let (_, b2) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(b1, b2);

    let (s, list) = srv.call("GET", "/sessions", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn action_outcome_and_feedback_validation() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let id = srv.create(json!({ "numSites": 5, "seed": 3, "priorThreat": 1.0 })).await;

    let (s, v) = srv.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": 50 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "wrong_phase");

    let (s, v) = srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": 2 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"][0]["field"], "action");

    let (s, v) = srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": 0 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["groundTruth"], true);
    assert_eq!(v["healthDelta"], -5.0);
    assert_eq!(v["timeDelta"], 20.0);
    assert_eq!(v["health"], 95.0);
    assert_eq!(v["clockRemaining"], 1480.0);

    let (s, _) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": 1 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    for bad in [json!(63), json!(-2), json!(102), json!(64.5), json!("64")] {
        let (s, v) = srv.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": bad }))).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
        assert_eq!(v["fields"][0]["field"], "value");
    }
    let (s, v) = srv.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": 64 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["storedValue"], 0.64);
    assert_eq!(v["nextPhase"], "awaitingAction");

    let (s, v) = srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": "deploy" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["healthDelta"].as_f64(), v["timeDelta"].as_f64()), (Some(0.0), Some(35.0)));
    assert_eq!(v["siteIndex"], 2);
}

#[tokio::test]
async fn errors_for_unknown_sessions_and_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let (s, v) = srv.call("GET", "/sessions/nope/briefing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");

    let (s, v) = srv
        .call("POST", "/sessions", Some(json!({ "numSites": 0, "robotWeight": 2.0 })))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = v["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["numSites", "robotWeight"]);

    let (s, v) = srv.call("POST", "/sessions", Some(json!({ "sites": 5 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("sites"));

    let (s, _) = srv.call("POST", "/sessions", Some(json!({ "strategy": "oracle" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn same_seed_gives_the_same_mission() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let mut logs = Vec::new();
    for _ in 0..2 {
        let id = srv.create(json!({ "numSites": 4, "seed": 11 })).await;
        for _ in 0..4 {
            srv.play(&id, 50).await;
        }
        logs.push(MissionLog::from_jsonl(&srv.export(&id).await).unwrap());
    }
    let strip = |l: &MissionLog| {
        let mut l = l.clone();
        l.header.session_id = None;
        l
    };
    assert_ne!(logs[0].header.session_id, logs[1].header.session_id);
    assert_eq!(strip(&logs[0]), strip(&logs[1]));
}

fn uniform_grid_belief(config: &MissionConfig, masses: Option<&[f64]>) -> WeightBelief {
    let uniform = WeightBelief::uniform(config.grid_size).unwrap();
    match masses {
        Some(m) => uniform.with_masses(m.to_vec()).unwrap(),
        None => uniform,
    }
}

#[tokio::test]
async fn full_mission_metrics_export_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let id = srv
        .create(json!({ "numSites": 5, "seed": 42, "strategy": "adaptive-learner", "statedPreference": 0.8 }))
        .await;
    let mut briefings = Vec::new();
    let mut last = Value::Null;
    for v in [30, 44, 58, 72, 86] {
        let (_, b) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
        briefings.push(b);
        last = srv.play(&id, v).await;
    }
    assert_eq!(last["nextPhase"], "finished");
    let (s, _) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let text = srv.export(&id).await;
    let log = MissionLog::from_jsonl(&text).unwrap();
    let expected = compute_metrics(&log.header.config, &log.sites, &log.header.stated_preference).unwrap();
    assert_eq!(serde_json::from_value::<valign_core::MissionMetrics>(last["metrics"].clone()).unwrap(), expected);
    assert_eq!(last["metrics"]["agreements"], 5);
    assert!(last["metrics"]["performance_score"].is_number());

    // Every briefing's recommendation is the planner's answer for the state
    // the log records before that site.
    let config = &log.header.config;
    let mut outcomes = Vec::new();
    let mut fitted: TrustDynamicsParams = config.trust_guess;
    for (i, site) in log.sites.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &log.sites[p]);
        let belief = uniform_grid_belief(config, prev.map(|p| p.belief_masses.as_slice()));
        let root: BetaTrustState = fitted.propagate(&outcomes).last().copied().unwrap_or(fitted.initial_state());
        let template = PlanningContext {
            horizon: config.num_sites - i,
            gamma: config.gamma,
            current_threat_prob: site.scan_level,
            prior_threat_prob: config.prior_threat,
            robot_weights: config.robot_fixed_weights,
            assessed_human_weights: config.robot_fixed_weights,
            trust_params: fitted,
            kappa: config.kappa,
            costs: config.costs,
        };
        let q = recommend(Strategy::AdaptiveLearner, &belief, &template, root).unwrap();
        assert_eq!(q, site.q_values, "site {}", i + 1);
        assert_eq!(briefings[i]["recommendation"], json!(q.recommendation));
        assert_eq!(briefings[i]["scanLevel"].as_f64(), Some(site.scan_level));
        outcomes.push(site.perf_assessed_by_robot);
        fitted = site.fitted_params;
    }

    let (s, v) = srv.call("POST", "/replay", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, text_metrics) = srv.raw("POST", "/replay", text.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Value>(&text_metrics).unwrap(), last["metrics"]);

    let lines: Vec<&str> = text.lines().collect();
    let truncated = format!("{}\n{}", lines[..3].join("\n"), &lines[3][..lines[3].len() / 2]);
    let (s, v) = srv.call_text("POST", "/replay", truncated).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_log");
    assert!(v["message"].as_str().unwrap().contains("last valid line is 3"), "{v}");

    let tampered = text.replacen("\"trust_feedback\":0.3,", "\"trust_feedback\":0.9,", 1);
    assert_ne!(tampered, text);
    let (s, v) = srv.call_text("POST", "/replay", tampered).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("checksum"), "{v}");
}

impl Server {
    async fn call_text(&self, method: &str, uri: &str, body: String) -> (StatusCode, Value) {
        let (s, text) = self.raw(method, uri, body).await;
        (s, serde_json::from_str(&text).unwrap())
    }
}

#[tokio::test]
async fn simulated_logs_replay_through_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let config = MissionConfig {
        num_sites: 8,
        seed: 5,
        ..MissionConfig::default()
    };
    let human = SimulatedHuman::new(TrustDynamicsParams::new(3.0, 2.0, 8.0, 6.0).unwrap(), RewardWeights::new(0.6).unwrap(), 9);
    let log = run_simulated_mission(&config, human).unwrap();
    let (s, v) = srv.call_text("POST", "/replay", log.to_jsonl()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_value::<valign_core::MissionMetrics>(v).unwrap(), log.footer.unwrap().metrics);
}

#[tokio::test]
async fn export_requires_a_finished_session() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let id = srv.create(json!({ "numSites": 2 })).await;
    let (s, v) = srv.call("GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "wrong_phase");
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, done, before, briefing) = {
        let srv = server(dir.path());
        let id = srv.create(json!({ "numSites": 6, "seed": 8, "strategy": "non-adaptive-learner" })).await;
        srv.play(&id, 60).await;
        srv.play(&id, 70).await;
        let (_, b) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
        srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": 1 }))).await;
        let done = srv.create(json!({ "numSites": 1 })).await;
        srv.play(&done, 40).await;
        let (_, before) = srv.call("GET", &format!("/sessions/{id}"), None).await;
        (id, done, before, b)
    };
    // A torn write at the end of the journal is discarded on open.
    let journal = dir.path().join(format!("sessions/{id}.jsonl"));
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"seq\":5,\"sum\":\"00");
    std::fs::write(&journal, text).unwrap();

    let srv = server(dir.path());
    let (_, after) = srv.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(before, after);
    assert_eq!(after["phase"], "awaitingFeedback");
    assert_eq!(after["siteIndex"], 3);
    let (s, v) = srv.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": 80 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, b) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(b["siteIndex"], 4);
    assert_ne!(b, briefing);
    for _ in 0..3 {
        srv.play(&id, 80).await;
    }
    let log = MissionLog::from_jsonl(&srv.export(&id).await).unwrap();
    assert_eq!(log.sites.len(), 6);
    assert_eq!(valign_core::replay(&log).unwrap(), log.footer.unwrap().metrics);
    srv.export(&done).await;
}

#[tokio::test]
async fn revealed_strategy_and_realtime_clock() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let id = srv
        .create(json!({ "numSites": 3, "clock": "realtime", "revealStrategy": true, "strategy": "non-learner" }))
        .await;
    srv.clock.fetch_add(4_000, Ordering::SeqCst);
    let (_, b) = srv.call("GET", &format!("/sessions/{id}/briefing"), None).await;
    assert_eq!(b["strategy"], "non-learner");
    assert_eq!(b["clockRemaining"], 1496.0);
    let (_, v) = srv.call("POST", &format!("/sessions/{id}/action"), Some(json!({ "action": 1 }))).await;
    assert_eq!(v["clockRemaining"], 1496.0 - 35.0);
    srv.clock.fetch_add(600_000, Ordering::SeqCst);
    let (_, st) = srv.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(st["clockRemaining"], 1496.0 - 35.0);
    srv.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({ "value": 50 }))).await;
    srv.clock.fetch_add(1_500_000, Ordering::SeqCst);
    let (_, st) = srv.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(st["phase"], "finished");
    assert_eq!(st["clockRemaining"], 0.0);
    let log = MissionLog::from_jsonl(&srv.export(&id).await).unwrap();
    assert_eq!(log.sites.len(), 1);
    assert_eq!(log.sites[0].wait_time, 4.0);
    assert_eq!(valign_core::replay(&log).unwrap().time_spent_pct, 100.0);
}

#[tokio::test]
async fn event_stream_pushes_phase_and_clock() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let id = srv.create(json!({ "numSites": 1 })).await;
    let req = Request::builder().uri(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let resp = srv.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();

    let mut seen = String::new();
    let mut next = async || {
        let frame = body.frame().await.unwrap().unwrap();
        String::from_utf8(frame.into_data().unwrap().to_vec()).unwrap()
    };
    seen.push_str(&next().await);
    assert!(seen.contains("event: phase"), "{seen}");
    assert!(seen.contains("\"phase\":\"awaitingAction\""), "{seen}");
    let chunk = next().await;
    assert!(chunk.contains("event: clock"), "{chunk}");

    srv.play(&id, 50).await;
    let mut rest = String::new();
    while !rest.contains("\"phase\":\"finished\"") {
        rest.push_str(&next().await);
    }
    assert!(body.frame().await.is_none());
}
