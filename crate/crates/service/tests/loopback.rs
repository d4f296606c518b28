use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use reqwest::StatusCode;
use serde_json::{json, Value};
use sirl_core::config::Hyperparameters;
use sirl_core::env::{EnvKind, FeatureVector, Scene, TrajectorySet};
use sirl_core::oracle::{
    answer_preference, answer_similarity, equal_weight_reward, preference_labels, read_records, similarity_answers,
    SimilarityQuery,
};
use sirl_core::representation::{train_sirl, Pretrain};
use sirl_service::{AnswerLog, AppState, ServiceConfig};

fn pool() -> TrajectorySet {
    TrajectorySet::generate(Scene::default_for(EnvKind::GridRobot), 0, 0).unwrap()
}

async fn start(pool: &TrajectorySet, config: ServiceConfig, log: Option<&Path>) -> SocketAddr {
    let log = match log {
        Some(p) => AnswerLog::open(p).unwrap(),
        None => AnswerLog::in_memory(),
    };
    let state = Arc::new(AppState::new(pool, config, log).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(sirl_service::serve(listener, state));
    addr
}

struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    fn new(addr: SocketAddr) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: format!("http://{addr}"),
        }
    }

    async fn next(&self, session: &str) -> Value {
        let r = self.http.get(format!("{}/session/{session}/next", self.base)).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        r.json().await.unwrap()
    }

    async fn answer(&self, session: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}/session/{session}/answer", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn export(&self, phase: &str) -> (StatusCode, String) {
        let r = self.http.get(format!("{}/export?phase={phase}", self.base)).send().await.unwrap();
        (r.status(), r.text().await.unwrap())
    }
}

fn ids(query: &Value) -> Vec<usize> {
    query["trajectories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["id"].as_u64().unwrap() as usize)
        .collect()
}

/// Answers the current query the way the simulated oracle would.
fn oracle_choice(query: &Value, features: &[FeatureVector]) -> Vec<usize> {
    let t = ids(query);
    match query["kind"].as_str().unwrap() {
        "similarity" => {
            let q = SimilarityQuery::new(query["query_id"].as_u64().unwrap(), [t[0], t[1], t[2]]).unwrap();
            let a = answer_similarity(&q, [&features[t[0]], &features[t[1]], &features[t[2]]], "oracle");
            vec![a.p1, a.p2]
        }
        _ => {
            let prefers_a = answer_preference(&equal_weight_reward(), &features[t[0]], &features[t[1]]) == 1;
            vec![if prefers_a { t[0] } else { t[1] }]
        }
    }
}

/// Answers queries until the session leaves the similarity phases.
async fn answer_similarity_phases(client: &Client, session: &str, features: &[FeatureVector]) -> usize {
    let mut answered = 0;
    loop {
        let q = client.next(session).await;
        if q["status"] != "query" || q["kind"] != "similarity" {
            return answered;
        }
        let choice = oracle_choice(&q, features);
        let (status, ack) = client
            .answer(session, json!({ "query_id": q["query_id"], "choice": choice, "elapsed_ms": 1200 }))
            .await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        answered += 1;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn oracle_session_exports_a_trainable_dataset() {
    let pool = pool();
    let features = pool.features().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let addr = start(&pool, ServiceConfig::default(), Some(&dir.path().join("answers.jsonl"))).await;
    let client = Client::new(addr);

    let answered = answer_similarity_phases(&client, "oracle-1", &features).await;
    assert_eq!(answered, 105);

    let (status, text) = client.export("similarity").await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = client.export("similarity").await;
    assert_eq!(text, again);

    let answers = similarity_answers(&read_records(text.as_bytes()).unwrap());
    assert_eq!(answers.len(), 100);
    // practice queries occupy ids 0..5
    assert!(answers.iter().all(|a| a.query_id >= 5 && a.response_ms == Some(1200)));

    let hp = Hyperparameters::desk(EnvKind::GridRobot);
    let triplets: Vec<[usize; 3]> = answers.iter().map(|a| a.triplet()).collect();
    let inputs = pool.inputs().unwrap();
    let (_, log) = train_sirl(EnvKind::GridRobot, &inputs, &triplets, hp.hidden, hp.embedding_dim, &hp.sirl, Pretrain::None, 3).unwrap();
    let last = log.final_loss().unwrap();
    assert!(last < log.first_epoch().unwrap());
    assert!(last < log.initial_loss);
}

#[tokio::test]
async fn full_session_reaches_completion() {
    let pool = pool();
    let features = pool.features().unwrap();
    let config = ServiceConfig {
        practice: 1,
        recorded: 3,
        ..ServiceConfig::default()
    };
    let client = Client::new(start(&pool, config, None).await);
    assert_eq!(answer_similarity_phases(&client, "s", &features).await, 4);

    let q = client.next("s").await;
    assert_eq!(q["phase"], "practice-preference");
    assert_eq!(ids(&q).len(), 2);
    assert!(q["scenario"].is_string());
    for _ in 0..4 {
        let q = client.next("s").await;
        let (status, _) = client
            .answer("s", json!({ "query_id": q["query_id"], "choice": oracle_choice(&q, &features) }))
            .await;
        assert_eq!(status, StatusCode::OK);
    }
    let done = client.next("s").await;
    assert_eq!(done["status"], "complete");
    assert_eq!(done["answered"], 8);

    let (status, text) = client.export("preference").await;
    assert_eq!(status, StatusCode::OK);
    let labels = preference_labels(&read_records(text.as_bytes()).unwrap());
    assert_eq!(labels.len(), 3);
    for l in &labels {
        assert_eq!(l.label, answer_preference(&equal_weight_reward(), &features[l.a], &features[l.b]));
    }
}

#[tokio::test]
async fn bad_submissions_are_rejected() {
    let pool = pool();
    let client = Client::new(start(&pool, ServiceConfig::default(), None).await);
    let q = client.next("x").await;
    assert_eq!(client.next("x").await["query_id"], q["query_id"]);
    let t = ids(&q);

    let (status, _) = client.answer("x", json!({ "query_id": 0, "choice": [t[0], 9999] })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = client.answer("x", json!({ "query_id": 0, "choice": [t[0]] })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = client.answer("x", json!({ "query_id": 3, "choice": [t[0], t[1]] })).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, ack) = client.answer("x", json!({ "query_id": 0, "choice": [t[0], t[1]] })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["recorded"], false);
    let (status, _) = client.answer("x", json!({ "query_id": 0, "choice": [t[0], t[1]] })).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // only a practice answer exists so far
    let (status, _) = client.export("similarity").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = client.export("practice-similarity").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let r = reqwest::get(format!("{}/session/{}/next", client.base, "bad%20id")).await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let health: Value = reqwest::get(format!("{}/health", client.base)).await.unwrap().json().await.unwrap();
    assert_eq!(health["answers"], 1);
    assert_eq!(health["trajectories"], 490);
}

#[tokio::test]
async fn sessions_resume_from_the_log() {
    let pool = pool();
    let features = pool.features().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("answers.jsonl");
    let config = ServiceConfig {
        practice: 2,
        recorded: 4,
        ..ServiceConfig::default()
    };
    let first = Client::new(start(&pool, config.clone(), Some(&path)).await);
    for _ in 0..3 {
        let q = first.next("r").await;
        first.answer("r", json!({ "query_id": q["query_id"], "choice": oracle_choice(&q, &features) })).await;
    }
    let expected = first.next("r").await;

    let second = Client::new(start(&pool, config, Some(&path)).await);
    let resumed = second.next("r").await;
    assert_eq!(resumed["query_id"], 3);
    assert_eq!(resumed["trajectories"], expected["trajectories"]);
    assert_eq!(first.export("similarity").await.1, second.export("similarity").await.1);
}
