//! Natural-language characterization of a prompt, either from a remote chat
//! endpoint or from the built-in deterministic templated backend.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::http::JsonClient;
use crate::promptkit::{DetailLevel, Prompt};
use crate::signalgen::InterferenceType;
use crate::tasks::{classify_hits, estimate_parameters, majority, Estimate};
use crate::{Error, Result};

pub const TOKEN_ENV: &str = "DESCRIBER_TOKEN";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

const GENERAL_PARAGRAPH: &str = include_str!("../templates/v1/describer_general.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Remote,
    Templated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub backend: Backend,
    pub token_count: usize,
    pub latency_ms: f64,
    /// Set when the text was cut to the prompt's token budget.
    pub truncated: bool,
    /// Parameter estimate behind the text (templated backend, jammer
    /// majority only).
    pub estimate: Option<Estimate>,
}

/// Whitespace token count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Cuts `text` after its `max_tokens`-th whitespace token. Returns the kept
/// prefix and whether anything was dropped.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> (&str, bool) {
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == max_tokens {
                    if text[i..].trim().is_empty() {
                        return (text, false);
                    }
                    return (&text[..i], true);
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > max_tokens {
                return (text[..i].trim_end(), true);
            }
        }
    }
    (text, false)
}

fn finish(text: &str, backend: Backend, max_tokens: usize, started: Instant, estimate: Option<Estimate>) -> Description {
    let (kept, truncated) = truncate_tokens(text, max_tokens);
    Description {
        text: kept.to_string(),
        backend,
        token_count: count_tokens(kept),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
        truncated,
        estimate,
    }
}

fn interpretation(ty: InterferenceType) -> &'static str {
    match ty {
        InterferenceType::None => "The spectrum stays at the noise floor in every channel, so the receiver should track normally.",
        InterferenceType::Chirp => {
            "A chirp sweeps its energy linearly across the band over time and degrades tracking on every channel it passes."
        }
        InterferenceType::FreqHopper => {
            "A frequency hopper dwells on one slot of its hop set at a time, so several narrow channels are hit in turn."
        }
        InterferenceType::Modulated => {
            "A modulated jammer shows a strong carrier with symmetric sidebands that persist for the whole snapshot."
        }
        InterferenceType::Multitone => {
            "A multitone jammer places several narrow continuous tones inside the band, each one a persistent spur."
        }
        InterferenceType::Pulsed => {
            "A pulsed jammer switches the whole band on and off, with splatter next to the band edges at each switch."
        }
        InterferenceType::Noise => {
            "A noise jammer raises the floor across the whole band for the whole snapshot and masks the satellite signals."
        }
    }
}

/// Deterministic characterization. With retrieved context it names the
/// majority neighbor type, the similarity-weighted bandwidth and power and
/// the majority scenario; without context it returns a fixed paragraph.
pub fn describe_templated(prompt: &Prompt) -> Result<Description> {
    let started = Instant::now();
    prompt.params.validate()?;
    let mut estimate = None;
    let text = match prompt.context.as_ref().filter(|c| !c.is_empty()) {
        None => GENERAL_PARAGRAPH.trim_end().to_string(),
        Some(ctx) => {
            let hits = &ctx.hits;
            let class = classify_hits(hits)?;
            let (scenario, _) = majority(hits, |m| m.scenario).expect("non-empty hits");
            let n = hits.len();
            let agree = class.votes[&class.intf_type];
            let mut text = if class.intf_type.is_jammer() {
                let e = estimate_parameters(hits, ctx.provenance.metric)?;
                estimate = Some(e);
                format!(
                    "The snapshot shows {} interference. {agree} of the {n} most similar reference snapshots agree. \
                     Estimated parameters: bandwidth={:.2} power={:.2} scenario={scenario}.",
                    class.intf_type.prose(),
                    e.bandwidth,
                    e.power,
                )
            } else {
                format!(
                    "The snapshot shows no interference. {agree} of the {n} most similar reference snapshots are clean. \
                     Estimated parameters: scenario={scenario}."
                )
            };
            if prompt.detail_level == DetailLevel::GeneralWithInterpretation {
                text.push(' ');
                text.push_str(interpretation(class.intf_type));
            }
            text
        }
    };
    Ok(finish(&text, Backend::Templated, prompt.params.max_tokens, started, estimate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl RemoteEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteEndpoint {
            url: url.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RemoteReply {
    text: String,
}

/// Client for a single-turn chat endpoint: POST prompt payload JSON,
/// receive `{"text": ...}`. Sends `Authorization: Bearer $DESCRIBER_TOKEN`
/// when the variable is set.
#[derive(Debug, Clone)]
pub struct RemoteDescriber {
    client: JsonClient,
}

impl RemoteDescriber {
    pub fn new(endpoint: &RemoteEndpoint) -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        RemoteDescriber {
            client: JsonClient::new(&endpoint.url, endpoint.timeout_ms, token),
        }
    }

    pub fn describe(&self, prompt: &Prompt) -> Result<Description> {
        let started = Instant::now();
        prompt.params.validate()?;
        let body = self.client.post(&prompt.payload())?;
        let reply: RemoteReply = serde_json::from_str(&body)
            .map_err(|e| Error::MalformedResponse(format!("expected {{\"text\": string}}: {e}")))?;
        if reply.text.trim().is_empty() {
            return Err(Error::MalformedResponse("empty text".into()));
        }
        Ok(finish(&reply.text, Backend::Remote, prompt.params.max_tokens, started, None))
    }
}

pub fn describe_remote(prompt: &Prompt, endpoint: &RemoteEndpoint) -> Result<Description> {
    RemoteDescriber::new(endpoint).describe(prompt)
}

/// The describer a pipeline is configured with.
#[derive(Debug, Clone)]
pub enum Describer {
    Templated,
    Remote(RemoteDescriber),
}

impl Describer {
    pub fn describe(&self, prompt: &Prompt) -> Result<Description> {
        match self {
            Describer::Templated => describe_templated(prompt),
            Describer::Remote(remote) => remote.describe(prompt),
        }
    }
}
