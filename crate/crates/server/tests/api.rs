use std::net::SocketAddr;
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};
use teastore_core::variability::{canonical_level, Configuration, Level};
use teastore_server::api::{router, start};
use teastore_core::live::LiveSim;

async fn spawn(level: Level) -> String {
    let live = LiveSim::new(canonical_level(level), 42).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(start(live))).await.unwrap() });
    format!("http://{addr}")
}

async fn get(base: &str, path: &str) -> Value {
    reqwest::get(format!("{base}{path}")).await.unwrap().json().await.unwrap()
}

async fn post(base: &str, path: &str, body: &str) -> (StatusCode, Value) {
    let r = reqwest::Client::new()
        .post(format!("{base}{path}"))
        .header("content-type", "application/json")
        .body(body.to_owned())
        .send()
        .await
        .unwrap();
    let status = r.status();
    let text = r.text().await.unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

async fn step(base: &str, ms: u64) -> Value {
    let (status, state) = post(base, "/api/sim/pace", &json!({ "mode": "step", "ms": ms }).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    state
}

fn config(v: &Value) -> Configuration {
    serde_json::from_value(v.clone()).unwrap()
}

/// Valid configurations honoring the request, fewest changes first, then
/// richer recommender, then richer auth, never introducing restrictive auth.
fn oracle_complete(request: &Value, current: Configuration) -> Option<Configuration> {
    let cur = serde_json::to_value(current).unwrap();
    let mut best: Option<((usize, i32, i32, Configuration), Configuration)> = None;
    for image in ["local_static", "external_lite", "external_full"] {
        for persistence in ["local_static", "external"] {
            for auth in ["absent", "standard", "restrictive"] {
                for recommender in ["disabled", "low_power", "full"] {
                    let c = json!({ "image": image, "persistence": persistence, "auth": auth, "recommender": recommender });
                    let auth_on = auth != "absent";
                    if (auth_on && persistence != "external") || (recommender == "full" && !auth_on) {
                        continue;
                    }
                    if request.as_object().unwrap().iter().any(|(k, v)| c[k] != *v) {
                        continue;
                    }
                    if auth == "restrictive" && request["auth"] != "restrictive" && cur["auth"] != "restrictive" {
                        continue;
                    }
                    let changes = ["image", "persistence", "auth", "recommender"].iter().filter(|k| c[**k] != cur[**k]).count();
                    let rec = ["disabled", "low_power", "full"].iter().position(|x| *x == recommender).unwrap() as i32;
                    let au = ["absent", "standard", "restrictive"].iter().position(|x| *x == auth).unwrap() as i32;
                    let parsed = config(&c);
                    let key = (changes, -rec, -au, parsed);
                    if best.as_ref().is_none_or(|(k, _)| key < *k) {
                        best = Some((key, parsed));
                    }
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

#[tokio::test]
async fn config_echoes_the_initial_level() {
    let base = spawn(Level::L0Barebone).await;
    assert_eq!(config(&get(&base, "/api/config").await), canonical_level(Level::L0Barebone));
    let state = get(&base, "/api/state").await;
    assert_eq!(state["t"], 0);
    assert_eq!(state["level"], "L0_barebone");
    assert_eq!(state["pace"]["mode"], "paused");
    assert_eq!(state["webui_mode"], "normal");
}

#[tokio::test]
async fn reconfigure_returns_the_completed_target() {
    let base = spawn(Level::L0Barebone).await;
    let request = json!({ "recommender": "full" });
    let (status, body) = post(&base, "/api/reconfigure", &request.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let expected = oracle_complete(&request, canonical_level(Level::L0Barebone)).unwrap();
    assert_eq!(config(&body["target"]), expected);
    assert!(body["plan_id"].is_u64());
    step(&base, 20_000).await;
    assert_eq!(config(&get(&base, "/api/config").await), expected);
}

#[tokio::test]
async fn reconfigure_rejects_bad_requests() {
    let base = spawn(Level::L2Full).await;
    let (status, _) = post(&base, "/api/reconfigure", r#"{"auth":"nonsense"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&base, "/api/reconfigure", "not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = post(&base, "/api/reconfigure", r#"{"auth":"standard","persistence":"local_static"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["violations"][0]["constraint"], "C1");
    let (status, body) = post(&base, "/api/reconfigure", "{}").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(config(&body["target"]), canonical_level(Level::L2Full));
}

#[tokio::test]
async fn faults_are_injected_and_cleared_by_id() {
    let base = spawn(Level::L2Full).await;
    let spec = r#"{"kind":"down","targets":["persistence_ext","image_ext","auth"]}"#;
    let (status, body) = post(&base, "/api/faults", spec).await;
    assert_eq!(status, StatusCode::OK);
    let id = body["id"].as_u64().unwrap();
    let state = get(&base, "/api/state").await;
    assert_eq!(state["active_faults"][id.to_string()]["kind"], "down");

    let client = reqwest::Client::new();
    let url = format!("{base}/api/faults/{id}");
    assert_eq!(client.delete(&url).send().await.unwrap().status(), StatusCode::NO_CONTENT);
    assert_eq!(client.delete(&url).send().await.unwrap().status(), StatusCode::NOT_FOUND);
    assert!(get(&base, "/api/state").await["active_faults"].as_object().unwrap().is_empty());

    let (status, _) = post(&base, "/api/faults", r#"{"kind":"down"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&base, "/api/faults", r#"{"kind":"down","targets":["nowhere"]}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn outage_walks_the_configuration_down_and_back() {
    let base = spawn(Level::L2Full).await;
    let spec = r#"{"kind":"down","targets":["persistence_ext","image_ext","auth"]}"#;
    let mut events = reqwest::get(format!("{base}/api/events")).await.unwrap();
    assert_eq!(events.headers()["content-type"], "text/event-stream");
    step(&base, 10_000).await;
    post(&base, "/api/faults", spec).await;
    let mut levels: Vec<String> = Vec::new();
    for _ in 0..50 {
        let state = step(&base, 1000).await;
        let level = state["level"].as_str().unwrap_or("other").to_owned();
        if levels.last() != Some(&level) {
            levels.push(level);
        }
    }
    let seq: Vec<&str> = levels.iter().map(String::as_str).filter(|l| *l != "other").collect();
    assert_eq!(seq, ["L2_full", "L0_barebone", "L2_full"], "{levels:?}");

    let mut buf = String::new();
    while !buf.contains("event: plan_executed\n") {
        let chunk = tokio::time::timeout(Duration::from_secs(5), events.chunk()).await.unwrap().unwrap().unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    let frame = buf.split("\n\n").find(|f| f.starts_with("event: plan_executed\n")).unwrap();
    let data: Value = serde_json::from_str(frame.split_once("\ndata: ").unwrap().1).unwrap();
    assert_eq!(data["kind"], "plan_executed");
}

#[tokio::test]
async fn metrics_follow_the_monitor() {
    let base = spawn(Level::L1BareboneRec).await;
    step(&base, 6000).await;
    let m = get(&base, "/api/metrics").await;
    assert_eq!(m["now"], 6000);
    assert!(m["client_requests"].as_u64().unwrap() > 0);
    assert!(m["endpoints"]["recommender"]["requests"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn pacing_modes() {
    let base = spawn(Level::L0Barebone).await;
    let (status, _) = post(&base, "/api/sim/pace", r#"{"mode":"warp"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&base, "/api/sim/pace", r#"{"mode":"realtime","factor":0}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = post(&base, "/api/sim/pace", r#"{"mode":"realtime","factor":100}"#).await;
    assert_eq!(status, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, paused) = post(&base, "/api/sim/pace", r#"{"mode":"paused"}"#).await;
    let t = paused["t"].as_u64().unwrap();
    assert!(t >= 10_000, "realtime x100 advanced only {t}ms in 200ms");
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(get(&base, "/api/state").await["t"], t);

    post(&base, "/api/sim/pace", r#"{"mode":"fast_forward"}"#).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, after) = post(&base, "/api/sim/pace", r#"{"mode":"paused"}"#).await;
    assert!(after["t"].as_u64().unwrap() > t);
}

#[tokio::test]
async fn scenarios_listed_and_run() {
    let base = spawn(Level::L0Barebone).await;
    let list = get(&base, "/api/scenarios").await;
    assert_eq!(list.as_array().unwrap().len(), 7);
    let (status, _) = post(&base, "/api/scenarios/nope/run", r#"{"seed":1}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(&base, "/api/scenarios/db_unavailable/run", r#"{"seed":"x"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn api_report_is_byte_identical_to_cli_report() {
    let base = spawn(Level::L0Barebone).await;
    let body = reqwest::Client::new()
        .post(format!("{base}/api/scenarios/devops_change/run"))
        .body(r#"{"seed":7}"#)
        .send()
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_teastore"))
        .args(["scenario", "run", "devops_change", "--seed", "7", "--report"])
        .arg(&path)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_eq!(std::fs::read(&path).unwrap(), body.to_vec());
}

#[tokio::test]
async fn second_server_on_a_taken_port_fails() {
    let first = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = first.local_addr().unwrap();
    let live = LiveSim::new(canonical_level(Level::L0Barebone), 1).unwrap();
    assert!(teastore_server::api::serve(live, addr).await.is_err());
}

#[test]
fn invalid_configuration_lists_violations() {
    let mut c = canonical_level(Level::L0Barebone);
    c.recommender = teastore_core::variability::RecommenderMode::Full;
    let err = LiveSim::new(c, 1).err().unwrap();
    assert_eq!(err.len(), 1);
    assert!(err[0].contains("C2"), "{err:?}");
}
