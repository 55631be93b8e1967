//! Blocking HTTP clients: remote shards and the endpoint warm benchmark.

use std::sync::OnceLock;
use std::time::Duration;

use clipse_core::bench::{self, BenchError, BenchResult, Scenario};
use clipse_core::embedding::ModelRef;
use clipse_core::search::RankedResult;
use clipse_core::shard::ShardBackend;
use clipse_core::Embedding;
use serde::Deserialize;

use crate::routes::{SearchResponse, ShardSearchRequest, ShardSearchResponse};

const SHARD_TIMEOUT: Duration = Duration::from_secs(30);

fn agent(timeout: Duration, keep_alive: bool) -> ureq::Agent {
    let mut config = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false);
    if !keep_alive {
        config = config.max_idle_connections(0);
    }
    ureq::Agent::new_with_config(config.build())
}

#[derive(Debug, Deserialize)]
pub struct Health {
    pub status: String,
    pub records: usize,
    pub model_id: String,
    pub dimension: usize,
}

fn read_error(resp: &mut ureq::http::Response<ureq::Body>) -> String {
    let status = resp.status();
    let body = resp.body_mut().read_to_string().unwrap_or_default();
    format!("HTTP {status}: {body}")
}

/// Fetches `GET {base}/api/health`.
pub fn fetch_health(agent: &ureq::Agent, base: &str) -> Result<Health, String> {
    let mut resp = agent
        .get(format!("{base}/api/health"))
        .call()
        .map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(read_error(&mut resp));
    }
    resp.body_mut().read_json().map_err(|e| e.to_string())
}

/// A shard served by another instance. Requests go to
/// `POST {base}/api/shard/search`; the remote model is checked against the
/// manifest on first contact.
pub struct HttpShard {
    base: String,
    model: ModelRef,
    agent: ureq::Agent,
    records: OnceLock<usize>,
}

impl HttpShard {
    pub fn new(base: impl Into<String>, model: ModelRef) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            model,
            agent: agent(SHARD_TIMEOUT, true),
            records: OnceLock::new(),
        }
    }

    fn verify(&self) -> Result<usize, String> {
        if let Some(n) = self.records.get() {
            return Ok(*n);
        }
        let health = fetch_health(&self.agent, &self.base)?;
        if health.model_id != self.model.model_id || health.dimension != self.model.dimension {
            return Err(format!(
                "{} serves {} (D={}), manifest expects {}",
                self.base, health.model_id, health.dimension, self.model
            ));
        }
        Ok(*self.records.get_or_init(|| health.records))
    }
}

impl ShardBackend for HttpShard {
    fn model(&self) -> &ModelRef {
        &self.model
    }

    fn record_count(&self) -> usize {
        self.verify().unwrap_or(0)
    }

    fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<RankedResult>, String> {
        self.verify()?;
        let mut resp = self
            .agent
            .post(format!("{}/api/shard/search", self.base))
            .send_json(ShardSearchRequest {
                embedding: query.as_slice().to_vec(),
                k,
            })
            .map_err(|e| format!("{}: {e}", self.base))?;
        if !resp.status().is_success() {
            return Err(format!("{}: {}", self.base, read_error(&mut resp)));
        }
        let body: ShardSearchResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(body.results)
    }
}

/// Opener for [`clipse_core::shard::ShardSet::open`].
pub fn open_http_shard(
    model: &ModelRef,
) -> impl Fn(&str) -> Result<Box<dyn ShardBackend>, String> + '_ {
    move |url| Ok(Box::new(HttpShard::new(url, model.clone())) as Box<dyn ShardBackend>)
}

/// Runs one `GET /api/search` and returns the parsed body.
pub fn search_request(
    agent: &ureq::Agent,
    base: &str,
    query: &str,
    extra: &[(&str, String)],
) -> Result<SearchResponse, String> {
    let mut req = agent.get(format!("{base}/api/search")).query("q", query);
    for (k, v) in extra {
        req = req.query(*k, v);
    }
    let mut resp = req.call().map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(read_error(&mut resp));
    }
    resp.body_mut().read_json().map_err(|e| e.to_string())
}

/// Warm query timing over HTTP. Every repetition opens a new connection and
/// reads the full first page, like a command-line HTTP client would.
pub fn bench_endpoint_warm(
    base: &str,
    query: &str,
    repetitions: usize,
    label: &str,
) -> Result<BenchResult, BenchError> {
    if repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let base = base.trim_end_matches('/');
    let agent = agent(Duration::from_secs(60), false);
    let n_images = fetch_health(&agent, base)
        .map_err(BenchError::Endpoint)?
        .records;
    let samples = bench::time_repetitions(repetitions, || {
        search_request(&agent, base, query, &[])
            .map(|_| ())
            .map_err(BenchError::Endpoint)
    })?;
    Ok(BenchResult::from_samples(
        Scenario::QueryWarm,
        label,
        n_images,
        &samples,
    ))
}

/// A client suitable for talking to a local server in tests and tools.
pub fn local_agent() -> ureq::Agent {
    agent(Duration::from_secs(60), true)
}
