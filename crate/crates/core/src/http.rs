//! JSON-over-HTTP POST with bounded retry, shared by the service clients.

use std::thread;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    /// Delay before the first retry; doubled for each further one.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Reply {
    pub header: Option<String>,
    pub body: String,
}

#[derive(Debug)]
pub(crate) enum PostError {
    /// Transport failures, 5xx or 429 on every attempt.
    Unavailable { attempts: u32, message: String },
    /// A non-retryable, non-200 status.
    Status(u16),
}

enum Attempt {
    Retry(String),
    Status(u16),
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn attempt(
    agent: &ureq::Agent,
    url: &str,
    body: &str,
    header: Option<&str>,
) -> Result<Reply, Attempt> {
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .map_err(|e| Attempt::Retry(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(Attempt::Retry(format!("HTTP {status}")));
    }
    if status != 200 {
        return Err(Attempt::Status(status));
    }
    let header = header
        .and_then(|h| resp.headers().get(h))
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Attempt::Retry(e.to_string()))?;
    Ok(Reply { header, body })
}

/// Posts `body` to `url`, retrying with exponential backoff. Returns the
/// response body and, if requested, one response header.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    body: &str,
    policy: &RetryPolicy,
    header: Option<&str>,
) -> Result<Reply, PostError> {
    let attempts = policy.retries + 1;
    let mut delay = policy.backoff;
    let mut last = String::new();
    for i in 0..attempts {
        if i > 0 {
            log::warn!("POST {url} failed ({last}); retry {i} in {delay:?}");
            thread::sleep(delay);
            delay *= 2;
        }
        match attempt(agent, url, body, header) {
            Ok(reply) => return Ok(reply),
            Err(Attempt::Status(s)) => return Err(PostError::Status(s)),
            Err(Attempt::Retry(msg)) => last = msg,
        }
    }
    Err(PostError::Unavailable {
        attempts,
        message: last,
    })
}
