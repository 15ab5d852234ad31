//! Prompt rendering, LLM transport and response parsing.

mod ledger;
mod parse;
mod prompts;
mod provider;

use thiserror::Error;

pub use ledger::{grounding_units, CostLedger, LedgerSnapshot, CHARS_PER_UNIT};
pub use parse::{
    parse_compare_response, parse_envision_response, parse_explore_response, parse_groundings_response,
    parse_label, parse_properties_response, EnvisionedCategory, ExploreChoice, Label, ParsedGroundings,
    PolarityAxis,
};
pub use prompts::{
    render_compare_prompt, render_envision_prompt, render_explore_prompt, render_groundings_prompt,
    render_label_prompt, render_properties_prompt, ClusterView,
};
pub use provider::{
    prompt_hash, ChatRequest, Fixture, FnProvider, HttpProvider, LlmProvider, ProviderConfig, ProviderKind,
    ScriptedProvider,
};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("no scripted response for prompt hash {hash}")]
    ScriptedMiss { hash: String },
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("cannot parse {kind} response: {message}")]
    Parse {
        kind: &'static str,
        message: String,
        raw: String,
    },
}

impl LlmError {
    pub fn is_parse(&self) -> bool {
        matches!(self, LlmError::Parse { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub input_units: u64,
    pub output_units: u64,
}

/// Send one request and charge its prompt and reply to the ledger.
pub fn complete(provider: &dyn LlmProvider, ledger: &CostLedger, request: &ChatRequest) -> Result<Completion, LlmError> {
    if request.prompt.is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let text = provider.complete(request)?;
    let input_units = grounding_units(&request.prompt);
    let output_units = grounding_units(&text);
    ledger.record_call(input_units, output_units);
    Ok(Completion {
        text,
        input_units,
        output_units,
    })
}
