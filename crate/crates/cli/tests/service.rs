use std::path::{Path, PathBuf};
use std::sync::Arc;

use credence_cli::commands::{open_digest_log, session_configs, ServeOptions};
use credence_cli::serve::{router, ServiceState};
use credence_core::llm::prompts::disclosure_text;
use credence_core::scenario::load_scenario;
use credence_core::Objective;
use futures_util::StreamExt;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

struct Server {
    base: String,
    http: reqwest::Client,
}

impl Server {
    async fn start(scenario: &str, transparent: Option<bool>, digests: Option<&Path>) -> Self {
        let mut spec = load_scenario(&repo(scenario)).unwrap();
        if let Some(t) = transparent {
            spec.transparent = t;
        }
        let opts = ServeOptions {
            seat: 0,
            live_llm: None,
            transcript: None,
        };
        let cells = session_configs(&spec, &opts).unwrap();
        let log = digests.map(|p| open_digest_log(p).unwrap());
        let state = Arc::new(ServiceState::new(cells, spec.seed, log));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move {
            axum::serve(listener, router(state)).await.unwrap();
        });
        Server {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap())
    }

    async fn create(&self, role: &str, cell: Option<&str>) -> String {
        let mut body = json!({ "role": role });
        if let Some(c) = cell {
            body["cell"] = json!(c);
        }
        let (status, view) = self.post("/api/sessions", body).await;
        assert_eq!(status, StatusCode::CREATED, "{view}");
        view["session_id"].as_str().unwrap().to_string()
    }

    fn ws_url(&self, id: &str) -> String {
        format!(
            "{}/api/sessions/{id}/events",
            self.base.replacen("http", "ws", 1)
        )
    }
}

async fn next_phase<S>(ws: &mut S) -> (u64, String)
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(5), ws.next())
            .await
            .expect("event arrives")
            .unwrap()
            .unwrap();
        if let Message::Text(text) = msg {
            let v: Value = serde_json::from_str(&text).unwrap();
            return (
                v["seq"].as_u64().unwrap(),
                v["phase"].as_str().unwrap().to_string(),
            );
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn consumer_session_walks_every_phase() {
    let server = Server::start("scenarios/session_fixed_transparent.toml", None, None).await;
    let id = server.create("consumer", None).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(server.ws_url(&id))
        .await
        .unwrap();

    let (status, offers) = server.get(&format!("/api/sessions/{id}/offers")).await;
    assert_eq!(status, StatusCode::OK);
    let offers = offers.as_array().unwrap();
    assert_eq!(offers.len(), 4);
    for o in offers {
        assert_eq!(o["delegated"], true);
        assert_eq!(o["objective"], "maximize Player A's payoff");
    }

    let (status, _) = server
        .post(
            &format!("/api/sessions/{id}/choice"),
            json!({ "choice": "opt_out" }),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let (_, outcome) = server.get(&format!("/api/sessions/{id}/outcome")).await;
    assert_eq!(outcome["role"], "consumer");
    assert_eq!(outcome["payoff"], 1.6);

    let mut seen = Vec::new();
    while seen.last().map(|(_, p): &(u64, String)| p.as_str()) != Some("resolved") {
        seen.push(next_phase(&mut ws).await);
    }
    let phases: Vec<&str> = seen.iter().map(|(_, p)| p.as_str()).collect();
    assert_eq!(
        phases,
        [
            "awaiting_expert_setup",
            "offers_posted",
            "awaiting_consumer_choice",
            "resolved"
        ]
    );
    assert!(seen
        .iter()
        .enumerate()
        .all(|(i, (seq, _))| *seq == i as u64));

    let (status, err) = server
        .post(
            &format!("/api/sessions/{id}/choice"),
            json!({ "choice": "opt_out" }),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["kind"], "out_of_phase");
    assert!(err["error"].as_str().unwrap().contains("resolved"), "{err}");

    let (status, err) = server
        .post(
            &format!("/api/sessions/{id}/expert"),
            json!({ "kind": "delegate" }),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");

    let (status, _) = server.get("/api/sessions/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn expert_session_delegates_and_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.ndjson");
    let server = Server::start("scenarios/delegation_chosen.toml", None, Some(&log)).await;
    let (_, cells) = server.get("/api/cells").await;
    let label = cells[2]["label"].as_str().unwrap().to_string();
    assert_eq!(cells[2]["institution"], "liability");

    let (status, view) = server
        .post("/api/sessions", json!({ "role": "expert", "cell": label }))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(view["phase"], "awaiting_expert_setup");
    let setup = &view["expert_setup"];
    assert_eq!(setup["objective_choices"].as_array().unwrap().len(), 4);
    // liability forbids undertreating the big problem
    assert!(setup["legal_actions"]["big"]
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["treatment"] == "HCT"));
    let id = view["session_id"].as_str().unwrap();

    let (status, err) = server.get(&format!("/api/sessions/{id}/offers")).await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");

    let illegal = json!({
        "kind": "own",
        "prices": { "low": 4, "high": 8 },
        "small": { "treatment": "LCT", "charge": "low" },
        "big": { "treatment": "LCT", "charge": "high" },
    });
    let (status, err) = server
        .post(&format!("/api/sessions/{id}/expert"), illegal)
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    assert_eq!(err["kind"], "illegal");
    let (_, still) = server.get(&format!("/api/sessions/{id}")).await;
    assert_eq!(still["phase"], "awaiting_expert_setup");

    let (status, err) = server
        .post(
            &format!("/api/sessions/{id}/expert"),
            json!({ "kind": "delegate" }),
        )
        .await;
    assert_eq!(
        status,
        StatusCode::UNPROCESSABLE_ENTITY,
        "objective is required: {err}"
    );

    let (status, view) = server
        .post(
            &format!("/api/sessions/{id}/expert"),
            json!({ "kind": "delegate", "objective": "efficiency_loving" }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["phase"], "resolved");
    let (_, outcome) = server.get(&format!("/api/sessions/{id}/outcome")).await;
    assert_eq!(outcome["role"], "expert");
    assert_eq!(outcome["delegated"], true);

    // reading a resolved session again does not log it twice
    server.get(&format!("/api/sessions/{id}")).await;
    let lines: Vec<Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["session_id"], id);
    assert_eq!(lines[0]["cell"], label);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn opaque_markets_never_reveal_objectives() {
    let server = Server::start("scenarios/delegation_chosen.toml", Some(false), None).await;
    let secrets: Vec<&str> = Objective::ALL
        .into_iter()
        .filter(|o| *o != Objective::NoObjective)
        .map(disclosure_text)
        .collect();
    let (_, cells) = server.get("/api/cells").await;
    for cell in cells.as_array().unwrap() {
        let label = cell["label"].as_str().unwrap();
        for _ in 0..5 {
            let id = server.create("consumer", Some(label)).await;
            let mut payloads = Vec::new();
            payloads.push(server.get(&format!("/api/sessions/{id}")).await.1);
            payloads.push(server.get(&format!("/api/sessions/{id}/offers")).await.1);
            payloads.push(
                server
                    .post(
                        &format!("/api/sessions/{id}/choice"),
                        json!({ "choice": { "approach": 0 } }),
                    )
                    .await
                    .1,
            );
            payloads.push(server.get(&format!("/api/sessions/{id}/outcome")).await.1);
            for p in payloads {
                let text = p.to_string();
                assert!(!text.contains("\"objective\""), "{text}");
                for s in &secrets {
                    assert!(!text.contains(s), "{text}");
                }
            }
        }
    }
}

/// Random request sequences against live sessions: phases only move
/// forward one step at a time, and rejected requests change nothing.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn random_request_orders_keep_phases_in_order() {
    let server = Server::start("scenarios/delegation_chosen.toml", None, None).await;
    let order = [
        "awaiting_expert_setup",
        "offers_posted",
        "awaiting_consumer_choice",
        "resolved",
    ];
    let rank = |p: &Value| order.iter().position(|o| p == o).unwrap();
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut rand = move |n: u64| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state % n
    };
    for _ in 0..40 {
        let role = if rand(2) == 0 { "consumer" } else { "expert" };
        let id = server.create(role, None).await;
        let mut phase = rank(&server.get(&format!("/api/sessions/{id}")).await.1["phase"]);
        for _ in 0..8 {
            let (status, _) = match rand(6) {
                0 => server.get(&format!("/api/sessions/{id}/offers")).await,
                1 => server.get(&format!("/api/sessions/{id}/outcome")).await,
                2 => {
                    let choice = if rand(2) == 0 {
                        json!("opt_out")
                    } else {
                        json!({ "approach": rand(6) })
                    };
                    server
                        .post(
                            &format!("/api/sessions/{id}/choice"),
                            json!({ "choice": choice }),
                        )
                        .await
                }
                3 => {
                    server
                        .post(
                            &format!("/api/sessions/{id}/expert"),
                            json!({ "kind": "delegate", "objective": "self_interested" }),
                        )
                        .await
                }
                4 => {
                    let own = json!({
                        "kind": "own",
                        "prices": { "low": 1 + rand(11), "high": 1 + rand(11) },
                        "small": { "treatment": "LCT", "charge": "low" },
                        "big": { "treatment": "HCT", "charge": "high" },
                    });
                    server
                        .post(&format!("/api/sessions/{id}/expert"), own)
                        .await
                }
                _ => server.get(&format!("/api/sessions/{id}")).await,
            };
            let now = rank(&server.get(&format!("/api/sessions/{id}")).await.1["phase"]);
            assert!(now >= phase, "phase went backwards");
            if !status.is_success() {
                assert_eq!(now, phase, "a rejected request changed the phase");
            }
            phase = now;
        }
        let events: Vec<String> = {
            let (mut ws, _) = tokio_tungstenite::connect_async(server.ws_url(&id))
                .await
                .unwrap();
            let mut out = Vec::new();
            for _ in 0..=phase {
                out.push(next_phase(&mut ws).await.1);
            }
            out
        };
        assert_eq!(events, order[..=phase]);
    }
}
