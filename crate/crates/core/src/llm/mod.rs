//! Prompt templates, completion providers and response grammars.

mod cassette;
mod http;
pub mod oracle;
mod parse;
mod template;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use cassette::{Cassette, CassetteEntry, Player, Recorder, CASSETTE_VERSION};
pub use http::{HttpConfig, HttpProvider, API_KEY_VAR};
pub use parse::{
    extract_decision, extract_json_block, extract_numbered, extract_tagged, parse_response, Decision, JsonBlock,
    Numbered, ParseError, ParsedResponse, TaggedBlocks,
};
pub use template::{example_outputs, render_template, required_vars, template_body, FEEDBACK_VAR};

use crate::env::digest_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    PlannerObsTodo,
    PlannerRuleTodo,
    PlannerPromote,
    PlannerLoopControl,
    ActorSubagent,
    ExtractorObsEdits,
    ExtractorRuleEdits,
    ExtractorCheck,
    ExtractorApply,
    KeyresultSummarize,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::PlannerObsTodo,
        TemplateId::PlannerRuleTodo,
        TemplateId::PlannerPromote,
        TemplateId::PlannerLoopControl,
        TemplateId::ActorSubagent,
        TemplateId::ExtractorObsEdits,
        TemplateId::ExtractorRuleEdits,
        TemplateId::ExtractorCheck,
        TemplateId::ExtractorApply,
        TemplateId::KeyresultSummarize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::PlannerObsTodo => "planner_obs_todo",
            TemplateId::PlannerRuleTodo => "planner_rule_todo",
            TemplateId::PlannerPromote => "planner_promote",
            TemplateId::PlannerLoopControl => "planner_loop_control",
            TemplateId::ActorSubagent => "actor_subagent",
            TemplateId::ExtractorObsEdits => "extractor_obs_edits",
            TemplateId::ExtractorRuleEdits => "extractor_rule_edits",
            TemplateId::ExtractorCheck => "extractor_check",
            TemplateId::ExtractorApply => "extractor_apply",
            TemplateId::KeyresultSummarize => "keyresult_summarize",
        }
    }

    pub fn parse(name: &str) -> Option<TemplateId> {
        TemplateId::ALL.into_iter().find(|t| t.as_str() == name)
    }

    /// Sampling temperature used when the caller does not override it.
    pub fn default_temperature(self) -> f64 {
        match self {
            TemplateId::ExtractorCheck | TemplateId::ExtractorApply | TemplateId::KeyresultSummarize => 0.0,
            _ => 0.7,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template_id: TemplateId,
    pub rendered_prompt: String,
    pub bindings: Bindings,
    pub temperature: f64,
    pub max_output: u32,
    /// 1 for the first try, incremented on every feedback round.
    pub attempt: u32,
}

impl CompletionRequest {
    /// Hash of the template id and the bindings (keys sorted, values hashed).
    /// Cosmetic template edits leave it unchanged.
    pub fn digest(&self) -> String {
        request_digest(self.template_id, &self.bindings)
    }
}

pub fn request_digest(id: TemplateId, bindings: &Bindings) -> String {
    let value_hashes: Vec<(String, String)> = bindings
        .iter()
        .map(|(k, v)| (k.clone(), digest_hex(&[v])))
        .collect();
    let mut parts: Vec<&str> = vec![id.as_str()];
    for (k, h) in &value_hashes {
        parts.push(k);
        parts.push(h);
    }
    digest_hex(&parts)
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("template {template} needs variable '{var}'")]
    MissingVariable { template: TemplateId, var: String },
    #[error("cassette has no more responses for {0}")]
    CassetteExhausted(TemplateId),
    #[error("cassette digest mismatch for {template}: expected {expected}, got {actual}")]
    DigestMismatch {
        template: TemplateId,
        expected: String,
        actual: String,
    },
    #[error("prompt for {template} has {chars} characters, limit is {limit}")]
    PromptTooLong { template: TemplateId, chars: usize, limit: usize },
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider answered HTTP {status} after {attempts} attempts")]
    Status { status: u16, attempts: u32 },
    #[error("malformed provider reply: {0}")]
    BadReply(String),
    #[error("{template} gave no usable answer after {attempts} attempts: {last_error}")]
    RetriesExhausted {
        template: TemplateId,
        attempts: u32,
        last_error: String,
        raw: String,
    },
    #[error("cassette file: {0}")]
    Cassette(String),
}

/// Anything that turns a request into completion text.
pub trait Provider: Send {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

/// Per-call knobs shared by every operation that talks to a provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallConfig {
    /// Total attempts per call, the first one included.
    pub parse_retry_limit: u32,
    pub max_output: u32,
    pub temperature_override: Option<f64>,
}

impl Default for CallConfig {
    fn default() -> Self {
        CallConfig {
            parse_retry_limit: 3,
            max_output: 2048,
            temperature_override: None,
        }
    }
}

/// Outcome of [`ask`]: the accepted value, the number of attempts and the
/// feedback messages that were sent back.
#[derive(Debug, Clone)]
pub struct Answer<T> {
    pub value: T,
    pub attempts: u32,
    pub feedback: Vec<String>,
    pub raw: String,
}

/// Renders `id`, asks `provider` and hands the text to `accept`. When
/// `accept` refuses the answer, its message is appended to the prompt as
/// feedback and the call is repeated, up to `cfg.parse_retry_limit` times in
/// total. Provider errors end the call immediately.
pub fn ask<T>(
    provider: &mut dyn Provider,
    id: TemplateId,
    bindings: &Bindings,
    cfg: &CallConfig,
    mut accept: impl FnMut(&str) -> Result<T, String>,
) -> Result<Answer<T>, LlmError> {
    let limit = cfg.parse_retry_limit.max(1);
    let mut feedback: Vec<String> = Vec::new();
    let mut last = (String::new(), String::new());
    for attempt in 1..=limit {
        let mut b = bindings.clone();
        if let Some(f) = feedback.last() {
            b.insert(FEEDBACK_VAR.to_string(), f.clone());
        }
        let prompt = render_template(id, &b)?;
        let req = CompletionRequest {
            template_id: id,
            rendered_prompt: prompt,
            bindings: b,
            temperature: cfg.temperature_override.unwrap_or(id.default_temperature()),
            max_output: cfg.max_output,
            attempt,
        };
        let raw = provider.complete(&req)?;
        match accept(&raw) {
            Ok(value) => {
                return Ok(Answer {
                    value,
                    attempts: attempt,
                    feedback,
                    raw,
                })
            }
            Err(message) => {
                tracing::debug!(template = %id, attempt, %message, "answer refused");
                last = (message.clone(), raw);
                feedback.push(message);
            }
        }
    }
    Err(LlmError::RetriesExhausted {
        template: id,
        attempts: limit,
        last_error: last.0,
        raw: last.1,
    })
}
