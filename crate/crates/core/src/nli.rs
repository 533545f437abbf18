//! Entailment scoring behind one handle: a remote NLI service, a JSONL
//! sidecar cache, and a deterministic lexical stub.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{self, PostError, RetryPolicy};
use crate::lexicon::WordSet;
use crate::textops::{content_words, tokenize};

pub const STUB_SCORER_ID: &str = "lexical-stub-v1";
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const SCORER_ID_HEADER: &str = "X-Scorer-Id";

#[derive(Debug, Error)]
pub enum NliError {
    #[error("NLI service unavailable after {attempts} attempts: {message}")]
    RemoteUnavailable { attempts: u32, message: String },
    #[error("NLI protocol error: {0}")]
    Protocol(String),
    #[error("NLI cache {path}: {source}")]
    Cache { path: PathBuf, source: io::Error },
}

impl NliError {
    pub fn code(&self) -> &'static str {
        match self {
            NliError::RemoteUnavailable { .. } => "REMOTE_UNAVAILABLE",
            NliError::Protocol(_) => "PROTOCOL",
            NliError::Cache { .. } => "CACHE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Remote,
    Cache,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliScore {
    pub premise: String,
    pub hypothesis: String,
    pub score: f64,
    pub origin: Origin,
}

/// Scores returned by a backend for one batch, with the scorer identity if
/// the backend reported one.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScores {
    pub scores: Vec<f64>,
    pub scorer_id: Option<String>,
}

pub trait NliBackend: Send + Sync {
    /// Scores each (premise, hypothesis) pair, in order.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<BatchScores, NliError>;

    fn origin(&self) -> Origin;

    /// Identity known before any call, if any.
    fn scorer_id(&self) -> Option<String> {
        None
    }
}

/// Content-word containment: the share of the hypothesis' content words that
/// also occur in the premise, 1.0 when the hypothesis has none.
#[derive(Debug, Clone)]
pub struct LexicalStub {
    stopwords: WordSet,
}

impl LexicalStub {
    pub fn new(stopwords: WordSet) -> Self {
        Self { stopwords }
    }

    pub fn score(&self, premise: &str, hypothesis: &str) -> f64 {
        let h = content_words(&tokenize(hypothesis), &self.stopwords);
        if h.is_empty() {
            return 1.0;
        }
        let p = content_words(&tokenize(premise), &self.stopwords);
        h.intersection(&p).count() as f64 / h.len() as f64
    }
}

impl Default for LexicalStub {
    fn default() -> Self {
        Self::new(WordSet::parse(crate::lexicon::DEFAULT_STOPWORDS))
    }
}

impl NliBackend for LexicalStub {
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<BatchScores, NliError> {
        Ok(BatchScores {
            scores: pairs.iter().map(|(p, h)| self.score(p, h)).collect(),
            scorer_id: Some(STUB_SCORER_ID.to_string()),
        })
    }

    fn origin(&self) -> Origin {
        Origin::Stub
    }

    fn scorer_id(&self) -> Option<String> {
        Some(STUB_SCORER_ID.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct WirePair<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    pairs: Vec<WirePair<'a>>,
}

#[derive(Deserialize)]
struct WireResponse {
    scores: Vec<f64>,
}

/// HTTP client for `POST {endpoint}/v1/nli`.
pub struct RemoteNli {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteNli {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = http::agent(config.retry.timeout);
        Self { config, agent }
    }

    fn url(&self) -> String {
        format!("{}/v1/nli", self.config.endpoint.trim_end_matches('/'))
    }
}

impl NliBackend for RemoteNli {
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<BatchScores, NliError> {
        let body = serde_json::to_string(&WireRequest {
            pairs: pairs
                .iter()
                .map(|(premise, hypothesis)| WirePair {
                    premise,
                    hypothesis,
                })
                .collect(),
        })
        .expect("request serializes");
        let reply = http::post_json(
            &self.agent,
            &self.url(),
            &body,
            &self.config.retry,
            Some(SCORER_ID_HEADER),
        )
        .map_err(|e| match e {
            PostError::Unavailable { attempts, message } => {
                NliError::RemoteUnavailable { attempts, message }
            }
            PostError::Status(s) => NliError::Protocol(format!("unexpected HTTP {s}")),
        })?;
        let parsed: WireResponse = serde_json::from_str(&reply.body)
            .map_err(|e| NliError::Protocol(format!("bad response body: {e}")))?;
        if parsed.scores.len() != pairs.len() {
            return Err(NliError::Protocol(format!(
                "expected {} scores, got {}",
                pairs.len(),
                parsed.scores.len()
            )));
        }
        if let Some(bad) = parsed.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(NliError::Protocol(format!("score {bad} outside [0, 1]")));
        }
        Ok(BatchScores {
            scores: parsed.scores,
            scorer_id: reply.header,
        })
    }

    fn origin(&self) -> Origin {
        Origin::Remote
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CacheKey {
    scorer_id: String,
    premise: String,
    hypothesis: String,
}

impl CacheKey {
    fn new(scorer_id: &str, premise: &str, hypothesis: &str) -> Self {
        Self {
            scorer_id: scorer_id.to_string(),
            premise: sha256_hex(premise),
            hypothesis: sha256_hex(hypothesis),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    scorer_id: String,
    premise_sha256: String,
    hypothesis_sha256: String,
    score: f64,
}

struct Sidecar {
    path: PathBuf,
    file: File,
}

/// Shareable scoring handle. Remote results are memoized in memory and, when
/// a sidecar path is given, appended to a JSONL file keyed by scorer id and
/// the SHA-256 of both texts. Cached values are only served once the scorer
/// id is known, from configuration or from the first response.
pub struct NliClient {
    backend: Box<dyn NliBackend>,
    batch_size: usize,
    scorer_id: Mutex<Option<String>>,
    memory: Mutex<HashMap<CacheKey, f64>>,
    sidecar: Option<Mutex<Sidecar>>,
}

impl NliClient {
    pub fn new(backend: Box<dyn NliBackend>) -> Self {
        let scorer_id = backend.scorer_id();
        Self {
            backend,
            batch_size: DEFAULT_BATCH_SIZE,
            scorer_id: Mutex::new(scorer_id),
            memory: Mutex::new(HashMap::new()),
            sidecar: None,
        }
    }

    pub fn stub() -> Self {
        Self::new(Box::new(LexicalStub::default()))
    }

    pub fn remote(config: RemoteConfig) -> Self {
        Self::new(Box::new(RemoteNli::new(config)))
    }

    pub fn with_batch_size(mut self, size: usize) -> Self {
        self.batch_size = size.max(1);
        self
    }

    pub fn with_scorer_id(self, id: impl Into<String>) -> Self {
        *self.scorer_id.lock().unwrap() = Some(id.into());
        self
    }

    /// Loads an existing sidecar (unreadable lines are skipped with a warning)
    /// and appends new remote results to it.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, NliError> {
        let cache_err = |source| NliError::Cache {
            path: path.to_path_buf(),
            source,
        };
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(cache_err)?);
            let mut memory = self.memory.lock().unwrap();
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(cache_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(c) if (0.0..=1.0).contains(&c.score) => {
                        memory.insert(
                            CacheKey {
                                scorer_id: c.scorer_id,
                                premise: c.premise_sha256,
                                hypothesis: c.hypothesis_sha256,
                            },
                            c.score,
                        );
                    }
                    _ => log::warn!(
                        "{}:{}: skipping unreadable cache line",
                        path.display(),
                        i + 1
                    ),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(cache_err)?;
        self.sidecar = Some(Mutex::new(Sidecar {
            path: path.to_path_buf(),
            file,
        }));
        Ok(self)
    }

    pub fn scorer_id(&self) -> Option<String> {
        self.scorer_id.lock().unwrap().clone()
    }

    pub fn cached_entries(&self) -> usize {
        self.memory.lock().unwrap().len()
    }

    /// Probability that `premise` entails `hypothesis`.
    pub fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScore, NliError> {
        let mut out = self.score_pairs(&[(premise, hypothesis)])?;
        Ok(out.pop().expect("one score per pair"))
    }

    /// The same score with premise and hypothesis swapped.
    pub fn score_reversed(&self, premise: &str, hypothesis: &str) -> Result<NliScore, NliError> {
        self.score(hypothesis, premise)
    }

    /// Scores many pairs, sending uncached ones to the backend in batches.
    pub fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore>, NliError> {
        let mut out: Vec<Option<NliScore>> = vec![None; pairs.len()];
        let mut pending = Vec::new();
        let origin = self.backend.origin();
        let caching = origin != Origin::Stub;

        let known = self.scorer_id();
        if let (true, Some(id)) = (caching, &known) {
            let memory = self.memory.lock().unwrap();
            for (i, (p, h)) in pairs.iter().enumerate() {
                if let Some(&score) = memory.get(&CacheKey::new(id, p, h)) {
                    out[i] = Some(make(p, h, score, Origin::Cache));
                } else {
                    pending.push(i);
                }
            }
        } else {
            pending.extend(0..pairs.len());
        }

        for chunk in pending.chunks(self.batch_size) {
            let batch: Vec<(&str, &str)> = chunk.iter().map(|&i| pairs[i]).collect();
            let result = self.backend.score_batch(&batch)?;
            if result.scores.len() != batch.len() {
                return Err(NliError::Protocol(format!(
                    "expected {} scores, got {}",
                    batch.len(),
                    result.scores.len()
                )));
            }
            let id = self.learn_id(result.scorer_id.as_deref());
            if caching {
                self.remember(id.as_deref(), &batch, &result.scores)?;
            }
            for (&i, score) in chunk.iter().zip(result.scores) {
                let (p, h) = pairs[i];
                out[i] = Some(make(p, h, score, origin));
            }
        }
        Ok(out
            .into_iter()
            .map(|s| s.expect("every pair scored"))
            .collect())
    }

    fn learn_id(&self, reported: Option<&str>) -> Option<String> {
        let mut id = self.scorer_id.lock().unwrap();
        match (id.as_deref(), reported) {
            (None, Some(r)) => *id = Some(r.to_string()),
            (Some(known), Some(r)) if known != r => {
                log::warn!(
                    "scorer reported id {r:?} but {known:?} is configured; keeping {known:?}"
                )
            }
            _ => {}
        }
        id.clone()
    }

    fn remember(
        &self,
        id: Option<&str>,
        batch: &[(&str, &str)],
        scores: &[f64],
    ) -> Result<(), NliError> {
        let Some(id) = id else {
            log::warn!("scorer id unknown; results are not cached");
            return Ok(());
        };
        let keys: Vec<CacheKey> = batch.iter().map(|(p, h)| CacheKey::new(id, p, h)).collect();
        {
            let mut memory = self.memory.lock().unwrap();
            for (k, &s) in keys.iter().zip(scores) {
                memory.insert(k.clone(), s);
            }
        }
        if let Some(sidecar) = &self.sidecar {
            let mut sidecar = sidecar.lock().unwrap();
            let mut buf = String::new();
            for (k, &score) in keys.into_iter().zip(scores) {
                let line = CacheLine {
                    scorer_id: k.scorer_id,
                    premise_sha256: k.premise,
                    hypothesis_sha256: k.hypothesis,
                    score,
                };
                buf.push_str(&serde_json::to_string(&line).expect("cache line serializes"));
                buf.push('\n');
            }
            let Sidecar { path, file } = &mut *sidecar;
            file.write_all(buf.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| NliError::Cache {
                    path: path.clone(),
                    source,
                })?;
        }
        Ok(())
    }
}

fn make(premise: &str, hypothesis: &str, score: f64, origin: Origin) -> NliScore {
    NliScore {
        premise: premise.to_string(),
        hypothesis: hypothesis.to_string(),
        score,
        origin,
    }
}
