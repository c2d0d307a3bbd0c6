//! Prompt assembly: task instruction prompts, retrieval of neighbor context,
//! and in-context prompts that carry that neighbor context.
//!
//! Templates live in `templates/v1` as plain text with `{name}`
//! placeholders and are compiled into the binary. Rendering is a pure
//! function of its inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedder::Embedding;
use crate::signalgen::{
    InterferenceType, JammerSpec, BANDWIDTH_RANGE, CHANNELS, POWER_RANGE, SCENARIO_RANGE, SPAN_MHZ, TIME_BINS,
};
use crate::vectorstore::{Metric, SearchHit, VectorIndex};
use crate::{Error, Result};

pub const TEMPLATE_VERSION: &str = "v1";
pub const DEFAULT_K: usize = 5;

const PROMPT_TEMPLATE: &str = include_str!("../templates/v1/prompt.txt");
const CONTEXT_TEMPLATE: &str = include_str!("../templates/v1/context.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailLevel {
    #[default]
    General,
    SignalInfoGeneral,
    SignalInfoDetailed,
    GeneralWithInterpretation,
}

impl DetailLevel {
    pub const ALL: [DetailLevel; 4] = [
        DetailLevel::General,
        DetailLevel::SignalInfoGeneral,
        DetailLevel::SignalInfoDetailed,
        DetailLevel::GeneralWithInterpretation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetailLevel::General => "general",
            DetailLevel::SignalInfoGeneral => "signal_info_general",
            DetailLevel::SignalInfoDetailed => "signal_info_detailed",
            DetailLevel::GeneralWithInterpretation => "general_with_interpretation",
        }
    }

    fn system_template(self) -> &'static str {
        match self {
            DetailLevel::General => include_str!("../templates/v1/system_general.txt"),
            DetailLevel::SignalInfoGeneral => include_str!("../templates/v1/system_signal_info_general.txt"),
            DetailLevel::SignalInfoDetailed => include_str!("../templates/v1/system_signal_info_detailed.txt"),
            DetailLevel::GeneralWithInterpretation => {
                include_str!("../templates/v1/system_general_with_interpretation.txt")
            }
        }
    }

    /// The system instruction for this level.
    pub fn system_instruction(self) -> String {
        let classes = InterferenceType::ALL.map(|t| t.name()).join(", ");
        let vars = [
            ("span_mhz", SPAN_MHZ.to_string()),
            ("channels", CHANNELS.to_string()),
            ("time_bins", TIME_BINS.to_string()),
            ("classes", classes),
            ("bandwidth_min", BANDWIDTH_RANGE.0.to_string()),
            ("bandwidth_max", BANDWIDTH_RANGE.1.to_string()),
            ("power_min", POWER_RANGE.0.to_string()),
            ("power_max", POWER_RANGE.1.to_string()),
            ("scenario_min", SCENARIO_RANGE.0.to_string()),
            ("scenario_max", SCENARIO_RANGE.1.to_string()),
        ];
        render(self.system_template(), &vars)
            .expect("built-in templates use known placeholders")
            .trim_end()
            .to_string()
    }
}

impl fmt::Display for DetailLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetailLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        DetailLevel::ALL
            .into_iter()
            .find(|d| d.name() == key)
            .ok_or_else(|| Error::param("detail_level", format!("unknown detail level {s:?}")))
    }
}

/// Replaces every `{name}` in `template` with its value. Values are inserted
/// verbatim and never rescanned. An unknown or unterminated placeholder is
/// an error.
pub fn render(template: &str, vars: &[(&str, String)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Contract(format!("unterminated placeholder in template: {:?}", &rest[open..])))?;
        let name = &after[..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .ok_or_else(|| Error::Contract(format!("template placeholder {{{name}}} has no value")))?;
        out.push_str(&value.1);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryText {
    pub text: String,
    pub detail_level: DetailLevel,
}

impl QueryText {
    pub fn new(text: impl Into<String>, detail_level: DetailLevel) -> Result<Self> {
        let q = QueryText {
            text: text.into(),
            detail_level,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::param("question", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    SnapshotId(u64),
    /// Base64 of the snapshot file bytes.
    Inline(String),
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageRef::SnapshotId(id) => write!(f, "snapshot {id}"),
            ImageRef::Inline(data) => write!(f, "inline snapshot ({} base64 characters)", data.len()),
        }
    }
}

/// Sampling parameters forwarded to the describer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// [0, 1]
    pub temperature: f64,
    /// 2..=99
    pub top_k: u32,
    /// 1..=500
    pub max_tokens: usize,
}

impl GenParams {
    pub const MAX_TOKENS: usize = 500;

    pub fn new(temperature: f64, top_k: u32, max_tokens: usize) -> Result<Self> {
        let p = GenParams {
            temperature,
            top_k,
            max_tokens,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::param("temperature", format!("{} outside [0, 1]", self.temperature)));
        }
        if !(2..=99).contains(&self.top_k) {
            return Err(Error::param("top_k", format!("{} outside 1 < top_k < 100", self.top_k)));
        }
        if !(1..=Self::MAX_TOKENS).contains(&self.max_tokens) {
            return Err(Error::param(
                "max_tokens",
                format!("{} outside [1, {}]", self.max_tokens, Self::MAX_TOKENS),
            ));
        }
        Ok(())
    }
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 0.7,
            top_k: 40,
            max_tokens: Self::MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Snapshot id of the query embedding.
    pub query_id: u64,
    pub k: usize,
    pub metric: Metric,
}

/// Retrieved neighbors, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub hits: Vec<SearchHit>,
    pub provenance: Provenance,
}

impl Context {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// The labeled neighbor lines, one per hit.
    pub fn neighbor_lines(&self) -> Vec<String> {
        let label = match self.provenance.metric {
            Metric::Cosine => "similarity",
            Metric::L2 => "distance",
        };
        self.hits
            .iter()
            .enumerate()
            .map(|(i, h)| neighbor_line(i + 1, &h.meta, label, h.score))
            .collect()
    }

    pub fn render(&self) -> String {
        let vars = [
            ("k", self.hits.len().to_string()),
            ("metric", self.provenance.metric.to_string()),
            ("neighbors", self.neighbor_lines().join("\n")),
        ];
        render(CONTEXT_TEMPLATE, &vars).expect("built-in templates use known placeholders")
    }
}

fn neighbor_line(rank: usize, meta: &JammerSpec, label: &str, score: f64) -> String {
    let (bandwidth, power) = if meta.intf_type.is_jammer() {
        (meta.bandwidth.to_string(), meta.power.to_string())
    } else {
        ("n/a".to_string(), "n/a".to_string())
    };
    format!(
        "neighbor {rank}: type={} bandwidth={bandwidth} power={power} scenario={} {label}={score:.4}",
        meta.intf_type, meta.scenario
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_instruction: String,
    pub context_block: Option<String>,
    /// Structured form of `context_block`.
    pub context: Option<Context>,
    pub image_ref: ImageRef,
    pub question: String,
    pub detail_level: DetailLevel,
    pub params: GenParams,
}

/// Wire form sent to a remote describer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub system: String,
    pub context: Option<String>,
    pub question: String,
    pub image_ref: ImageRef,
    pub params: GenParams,
}

impl Prompt {
    pub fn with_params(mut self, params: GenParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn has_context(&self) -> bool {
        self.context_block.is_some()
    }

    /// The complete prompt text.
    pub fn text(&self) -> String {
        let context = match &self.context_block {
            Some(block) => format!("{}\n\n", block.trim_end()),
            None => String::new(),
        };
        let vars = [
            ("system", self.system_instruction.clone()),
            ("context", context),
            ("image", self.image_ref.to_string()),
            ("question", self.question.clone()),
        ];
        render(PROMPT_TEMPLATE, &vars).expect("built-in templates use known placeholders")
    }

    pub fn payload(&self) -> PromptPayload {
        PromptPayload {
            system: self.system_instruction.clone(),
            context: self.context_block.clone(),
            question: self.question.clone(),
            image_ref: self.image_ref.clone(),
            params: self.params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.payload()).expect("payload serializes")
    }
}

/// Task instruction prompt: instruction, image reference and question, no
/// retrieved context.
pub fn assemble_task_instruction(image_ref: ImageRef, t: &QueryText) -> Result<Prompt> {
    t.validate()?;
    Ok(Prompt {
        system_instruction: t.detail_level.system_instruction(),
        context_block: None,
        context: None,
        image_ref,
        question: t.text.clone(),
        detail_level: t.detail_level,
        params: GenParams::default(),
    })
}

/// Retrieval: the top-k stored neighbors of `query`. The question is part
/// of the signature for text-aware retrievers; similarity search ignores it.
pub fn retrieve_context(index: &VectorIndex, query: &Embedding, t: &QueryText, k: usize) -> Result<Context> {
    t.validate()?;
    retrieve_context_vector(index, query.snapshot_id, query.vector(), k)
}

pub fn retrieve_context_vector(index: &VectorIndex, query_id: u64, vector: &[f32], k: usize) -> Result<Context> {
    Ok(Context {
        hits: index.search(vector, k)?,
        provenance: Provenance {
            query_id,
            k,
            metric: index.metric(),
        },
    })
}

/// In-context prompt: the task instruction prompt plus the rendered
/// neighbor block.
pub fn assemble_in_context(ctx: &Context, image_ref: ImageRef, t: &QueryText) -> Result<Prompt> {
    if ctx.is_empty() {
        return Err(Error::param(
            "context",
            "no retrieved neighbors; use assemble_task_instruction for a prompt without context",
        ));
    }
    let mut prompt = assemble_task_instruction(image_ref, t)?;
    prompt.context_block = Some(ctx.render());
    prompt.context = Some(ctx.clone());
    Ok(prompt)
}
