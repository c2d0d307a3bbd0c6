//! Blocking JSON-over-HTTP POST client shared by the external encoder and
//! the remote describer.

use std::io;
use std::time::Duration;

use serde::Serialize;
use ureq::Agent;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    agent: Agent,
    url: String,
    timeout_ms: u64,
    bearer: Option<String>,
}

impl JsonClient {
    pub(crate) fn new(url: &str, timeout_ms: u64, bearer: Option<String>) -> Self {
        let config = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build();
        JsonClient {
            agent: config.into(),
            url: url.to_string(),
            timeout_ms,
            bearer,
        }
    }

    pub(crate) fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body` as JSON and returns the raw response text of a 2xx reply.
    pub(crate) fn post<T: Serialize>(&self, body: &T) -> Result<String> {
        let payload = serde_json::to_vec(body)?;
        let mut request = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send(&payload[..]).map_err(|e| self.map_error(e))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.map_error(e))?;
        if !(200..300).contains(&status) {
            return Err(Error::Transport(format!(
                "{} answered HTTP {status}: {}",
                self.url,
                truncate(&text, 200)
            )));
        }
        Ok(text)
    }

    fn map_error(&self, err: ureq::Error) -> Error {
        match err {
            ureq::Error::Timeout(_) => Error::Timeout(self.timeout_ms),
            ureq::Error::Io(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                Error::Timeout(self.timeout_ms)
            }
            other => Error::Transport(format!("{}: {other}", self.url)),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Parses a JSON reply, tolerating the bare `NaN`/`Infinity` tokens some
/// servers emit: those become `null` so callers can report them as data
/// integrity failures rather than as malformed responses.
pub(crate) fn parse_lenient(text: &str) -> Result<serde_json::Value> {
    match serde_json::from_str(text) {
        Ok(value) => Ok(value),
        Err(strict) => {
            let patched = text
                .replace("-Infinity", "null")
                .replace("Infinity", "null")
                .replace("NaN", "null");
            serde_json::from_str(&patched)
                .map_err(|_| Error::MalformedResponse(format!("invalid JSON: {strict}")))
        }
    }
}
