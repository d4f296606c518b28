//! Helpers for the acceptance suite: a scorecard that prints one line per
//! criterion, and a client that answers labeling sessions like the
//! simulated oracle.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sirl_core::env::{FeatureVector, TrajectorySet};
use sirl_core::oracle::{answer_preference, answer_similarity, GroundTruthReward, SimilarityQuery};
use sirl_service::{AnswerLog, AppState, ServiceConfig};

#[derive(Debug, Default)]
pub struct Scorecard {
    passed: Vec<String>,
    failed: Vec<String>,
    filters: Vec<String>,
}

impl Scorecard {
    /// Criteria whose name contains none of `filters` are skipped; an empty
    /// filter list runs everything.
    pub fn new(filters: Vec<String>) -> Self {
        Self {
            filters,
            ..Self::default()
        }
    }

    pub fn selected(&self, name: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| name.contains(f.as_str()))
    }

    /// Runs `check` when selected and prints `PASS`/`FAIL`, the criterion,
    /// its detail line, and the wall-clock time.
    pub fn run(&mut self, name: &str, check: impl FnOnce() -> Result<(bool, String), String>) {
        if !self.selected(name) {
            return;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        if pass {
            self.passed.push(name.into());
        } else {
            self.failed.push(name.into());
        }
    }

    /// Lines that inform without counting toward the result.
    pub fn note(&self, name: &str, detail: &str) {
        if self.selected(name) {
            println!("INFO {name}: {detail}");
        }
    }

    pub fn passed(&self) -> &[String] {
        &self.passed
    }

    pub fn failed(&self) -> &[String] {
        &self.failed
    }
}

/// Starts the service on an ephemeral local port.
pub async fn start_service(pool: &TrajectorySet, config: ServiceConfig) -> sirl_core::Result<SocketAddr> {
    let state = Arc::new(AppState::new(pool, config, AnswerLog::in_memory())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(sirl_service::serve(listener, state));
    Ok(addr)
}

/// Answers every query of a session with the feature-space oracle and the
/// given preference reward, and returns the number of answers submitted.
pub async fn answer_session(
    addr: SocketAddr,
    session: &str,
    features: &[FeatureVector],
    reward: &GroundTruthReward,
) -> Result<usize, String> {
    let http = reqwest::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| e.to_string())?;
    let base = format!("http://{addr}/session/{session}");
    let mut answered = 0;
    loop {
        let q: Value = get_json(&http, &format!("{base}/next")).await?;
        if q["status"] != "query" {
            return Ok(answered);
        }
        let ids: Vec<usize> = q["trajectories"]
            .as_array()
            .ok_or("query without trajectories")?
            .iter()
            .filter_map(|t| t["id"].as_u64().map(|v| v as usize))
            .collect();
        let choice = match (q["kind"].as_str(), ids.as_slice()) {
            (Some("similarity"), &[a, b, c]) => {
                let id = q["query_id"].as_u64().ok_or("query without id")?;
                let query = SimilarityQuery::new(id, [a, b, c]).map_err(|e| e.to_string())?;
                let ans = answer_similarity(&query, [&features[a], &features[b], &features[c]], session);
                vec![ans.p1, ans.p2]
            }
            (Some("preference"), &[a, b]) => {
                vec![if answer_preference(reward, &features[a], &features[b]) == 1 { a } else { b }]
            }
            _ => return Err(format!("unexpected query {q}")),
        };
        let r = http
            .post(format!("{base}/answer"))
            .json(&json!({ "query_id": q["query_id"], "choice": choice }))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        if !r.status().is_success() {
            return Err(format!("answer rejected with {}", r.status()));
        }
        answered += 1;
    }
}

/// The ndjson export of one phase.
pub async fn export(addr: SocketAddr, phase: &str) -> Result<String, String> {
    let r = reqwest::get(format!("http://{addr}/export?phase={phase}"))
        .await
        .map_err(|e| e.to_string())?;
    if !r.status().is_success() {
        return Err(format!("export returned {}", r.status()));
    }
    r.text().await.map_err(|e| e.to_string())
}

async fn get_json(http: &reqwest::Client, url: &str) -> Result<Value, String> {
    let r = http.get(url).send().await.map_err(|e| e.to_string())?;
    if !r.status().is_success() {
        return Err(format!("GET {url} returned {}", r.status()));
    }
    r.json().await.map_err(|e| e.to_string())
}
