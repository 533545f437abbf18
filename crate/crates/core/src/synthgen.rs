//! Chain-of-thought prompts for instruction generation, response parsing,
//! and target generation through an external LLM.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusio::RewriteRecord;
use crate::http::{self, PostError, RetryPolicy};
use crate::lexicon::DEFAULT_COT_SHOTS;

pub const TEXT_LABEL: &str = "Text:";
pub const Q1: &str = "What kind of text is the following?";
pub const Q2: &str = "What is a relevant writing prompt or edit instruction for text?";
pub const SHOT_COUNT: usize = 3;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("expected exactly {SHOT_COUNT} exemplars, got {0}")]
    ShotCount(usize),
    #[error("exemplar {index}: {field} is empty")]
    IncompleteShot { index: usize, field: &'static str },
    #[error("{0} contains a question marker of the prompt template")]
    MarkerInText(String),
    #[error("{path}: {message}")]
    ShotFile { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub text: String,
    pub text_description: String,
    pub instruction: String,
}

pub fn default_shots() -> Vec<Shot> {
    serde_json::from_str(DEFAULT_COT_SHOTS).expect("shipped exemplars parse")
}

pub fn load_shots(path: &Path) -> Result<Vec<Shot>, SynthError> {
    let err = |message: String| SynthError::ShotFile {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotPrompt {
    pub shots: Vec<Shot>,
    pub query_text: String,
    pub rendered: String,
}

fn has_marker(text: &str) -> bool {
    text.contains(Q1) || text.contains(Q2)
}

fn render_block(out: &mut String, text: &str, description: &str, instruction: &str) {
    let line = |out: &mut String, label: &str, value: &str| {
        out.push_str(label);
        if !value.is_empty() {
            out.push(' ');
            out.push_str(value);
        }
        out.push('\n');
    };
    line(out, TEXT_LABEL, text);
    line(out, "Q1:", Q1);
    line(out, "A1:", description);
    line(out, "Q2:", Q2);
    line(out, "A2:", instruction);
}

/// Renders three worked exemplars followed by the query with blank answers.
pub fn build_cot_prompt(query_text: &str, shots: &[Shot]) -> Result<CotPrompt, SynthError> {
    if shots.len() != SHOT_COUNT {
        return Err(SynthError::ShotCount(shots.len()));
    }
    for (index, s) in shots.iter().enumerate() {
        for (field, value) in [
            ("text", &s.text),
            ("text_description", &s.text_description),
            ("instruction", &s.instruction),
        ] {
            if value.trim().is_empty() {
                return Err(SynthError::IncompleteShot { index, field });
            }
            if has_marker(value) {
                return Err(SynthError::MarkerInText(format!(
                    "exemplar {index} {field}"
                )));
            }
        }
    }
    if has_marker(query_text) {
        return Err(SynthError::MarkerInText("query text".into()));
    }
    let mut rendered = String::new();
    for s in shots {
        render_block(
            &mut rendered,
            s.text.trim(),
            s.text_description.trim(),
            s.instruction.trim(),
        );
        rendered.push('\n');
    }
    render_block(&mut rendered, query_text.trim(), "", "");
    Ok(CotPrompt {
        shots: shots.to_vec(),
        query_text: query_text.to_string(),
        rendered: rendered.trim_end().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResponseFlag {
    /// The second answer ran past one line and was cut.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw: String,
    pub text_description: Option<String>,
    pub instruction: Option<String>,
    pub flags: BTreeSet<ResponseFlag>,
}

/// First non-empty line of `text`, and whether more non-empty lines follow.
fn first_line(text: &str) -> (Option<String>, bool) {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().map(str::to_string);
    (first, lines.next().is_some())
}

fn after_label<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.rfind(label).map(|i| &text[i + label.len()..])
}

/// Extracts the two answers from a model completion. The completion may
/// repeat the query block or start right after the final `A1:`.
pub fn parse_cot_response(raw: &str) -> LlmResponse {
    let mut flags = BTreeSet::new();
    let (before_q2, after_q2) = match raw.rfind(Q2) {
        Some(i) => (&raw[..i], Some(&raw[i + Q2.len()..])),
        None => (raw, None),
    };

    let description_region = after_label(before_q2, "A1:")
        .or_else(|| after_label(before_q2, Q1))
        .unwrap_or(before_q2);
    let description_region = description_region
        .trim_end()
        .strip_suffix("Q2:")
        .unwrap_or(description_region);
    let text_description = first_line(description_region).0;

    let instruction = after_q2.and_then(|rest| {
        let rest = after_label(rest, "A2:").unwrap_or(rest);
        let (line, more) = first_line(rest);
        if line.is_some() && more {
            flags.insert(ResponseFlag::Truncated);
        }
        line
    });

    LlmResponse {
        raw: raw.to_string(),
        text_description,
        instruction,
        flags,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("LLM service unavailable after {attempts} attempts: {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("LLM protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Other(String),
}

pub trait LlmClient: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Adapts a closure into a client.
pub struct FnClient<F>(pub F);

impl<F> LlmClient for FnClient<F>
where
    F: Fn(&str) -> Result<String, LlmError> + Send + Sync,
{
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        (self.0)(prompt)
    }
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub endpoint: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_k: u32,
    pub retry: RetryPolicy,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_tokens: 512,
            temperature: 0.5,
            top_k: 40,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    top_k: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// HTTP client for `POST {endpoint}/v1/generate`.
pub struct RemoteLlm {
    config: LlmConfig,
    agent: ureq::Agent,
}

impl RemoteLlm {
    pub fn new(config: LlmConfig) -> Self {
        let agent = http::agent(config.retry.timeout);
        Self { config, agent }
    }
}

impl LlmClient for RemoteLlm {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::to_string(&GenerateRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
            top_k: self.config.top_k,
        })
        .expect("request serializes");
        let url = format!("{}/v1/generate", self.config.endpoint.trim_end_matches('/'));
        let reply = http::post_json(&self.agent, &url, &body, &self.config.retry, None).map_err(
            |e| match e {
                PostError::Unavailable { attempts, message } => {
                    LlmError::Unavailable { attempts, message }
                }
                PostError::Status(s) => LlmError::Protocol(format!("unexpected HTTP {s}")),
            },
        )?;
        serde_json::from_str::<GenerateResponse>(&reply.body)
            .map(|r| r.text)
            .map_err(|e| LlmError::Protocol(format!("bad response body: {e}")))
    }
}

/// The prompt asking the model to rewrite `source` under `instruction`.
pub fn rewrite_prompt(instruction: &str, source: &str) -> String {
    format!("{}\n{}", instruction.trim(), source)
}

/// One line of `synth-prompt` output and `synth-generate` input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub source: String,
    /// Rendered chain-of-thought prompt.
    pub prompt: String,
    /// Set when the instruction is already known, skipping the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

pub fn prompt_record(id: &str, source: &str, shots: &[Shot]) -> Result<PromptRecord, SynthError> {
    Ok(PromptRecord {
        id: id.to_string(),
        source: source.to_string(),
        prompt: build_cot_prompt(source, shots)?.rendered,
        instruction: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SkipReason {
    EmptyOutput,
    ClientError,
    NoInstruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub id: String,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Generated {
    Record(RewriteRecord),
    Skipped(Skip),
}

fn skip(id: &str, reason: SkipReason, detail: impl Into<String>) -> Generated {
    let s = Skip {
        id: id.to_string(),
        reason,
        detail: detail.into(),
    };
    log::warn!("skipping {}: {:?} {}", s.id, s.reason, s.detail);
    Generated::Skipped(s)
}

fn rewrite_one(
    client: &dyn LlmClient,
    id: &str,
    instruction: &str,
    source: &str,
    mut meta: RewriteRecord,
) -> Generated {
    match client.generate(&rewrite_prompt(instruction, source)) {
        Err(e) => skip(id, SkipReason::ClientError, e.to_string()),
        Ok(text) if text.trim().is_empty() => skip(id, SkipReason::EmptyOutput, ""),
        Ok(text) => {
            meta.target = Some(text.trim().to_string());
            Generated::Record(meta)
        }
    }
}

/// Runs `f` over `items` with at most `concurrency` in flight, in input
/// order.
fn bounded<T: Sync, U: Send>(
    items: &[T],
    concurrency: usize,
    f: impl Fn(&T) -> U + Sync + Send,
) -> Vec<U> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Requests a rewrite of each record's source under its instruction and
/// attaches it as the target.
pub fn generate_targets(
    records: &[RewriteRecord],
    client: &dyn LlmClient,
    concurrency: usize,
) -> Vec<Generated> {
    bounded(records, concurrency, |r| {
        rewrite_one(
            client,
            &r.id,
            &r.instruction,
            &r.source,
            RewriteRecord {
                target: None,
                ..r.clone()
            },
        )
    })
}

/// Full synthesis: obtain an instruction from the chain-of-thought prompt
/// (unless given), then generate the target.
pub fn synthesize(
    prompts: &[PromptRecord],
    client: &dyn LlmClient,
    concurrency: usize,
) -> Vec<Generated> {
    bounded(prompts, concurrency, |p| {
        let mut meta = std::collections::BTreeMap::new();
        let instruction = match &p.instruction {
            Some(i) if !i.trim().is_empty() => i.trim().to_string(),
            _ => {
                let raw = match client.generate(&p.prompt) {
                    Ok(raw) => raw,
                    Err(e) => return skip(&p.id, SkipReason::ClientError, e.to_string()),
                };
                let parsed = parse_cot_response(&raw);
                let Some(instruction) = parsed.instruction else {
                    return skip(&p.id, SkipReason::NoInstruction, "");
                };
                if let Some(d) = parsed.text_description {
                    meta.insert("text_description".to_string(), d);
                }
                if parsed.flags.contains(&ResponseFlag::Truncated) {
                    meta.insert("instruction_truncated".to_string(), "true".to_string());
                }
                instruction
            }
        };
        meta.insert("origin".to_string(), "synthetic".to_string());
        let record = RewriteRecord {
            id: p.id.clone(),
            instruction: instruction.clone(),
            source: p.source.clone(),
            target: None,
            prediction: None,
            meta,
        };
        rewrite_one(client, &p.id, &instruction, &p.source, record)
    })
}
