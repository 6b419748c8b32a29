//! Chat-completion reasoning backend.
//!
//! Request body:
//! `{"model": .., "temperature": 0, "messages": [{"role": "system", "content": ..}, {"role": "user", "content": ..}]}`
//! Response body: `{"choices": [{"message": {"role": "assistant", "content": ..}}]}`.
//! When the first reply does not parse, the conversation is re-sent once
//! with the reply and a repair instruction appended.

use serde::{Deserialize, Serialize};

use super::{
    parse_response, render_prompt, render_repair_prompt, system_prompt, ReasonError, Reasoner,
    ReasoningContext, ReasoningOutput,
};
use crate::remote::{JsonClient, RemoteEndpoint, RemoteError};

pub const LLM_API_KEY_ENV: &str = "HIREC_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatReasonerConfig {
    pub endpoint_url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ChatReasonerConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            model: String::new(),
            timeout_ms: crate::remote::DEFAULT_TIMEOUT_MS,
            max_in_flight: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Message {
    role: String,
    content: String,
}

impl Message {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [Message],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

pub struct ChatReasoner {
    client: JsonClient,
    model: String,
}

impl ChatReasoner {
    pub fn new(endpoint: RemoteEndpoint, model: impl Into<String>) -> Self {
        Self {
            client: JsonClient::new(endpoint),
            model: model.into(),
        }
    }

    /// `api_key` falls back to `HIREC_LLM_API_KEY`.
    pub fn from_config(config: &ChatReasonerConfig, api_key: Option<String>) -> Self {
        let key = api_key.or_else(|| std::env::var(LLM_API_KEY_ENV).ok());
        let endpoint = RemoteEndpoint::new(config.endpoint_url.clone())
            .with_api_key(key)
            .with_timeout_ms(config.timeout_ms)
            .with_max_in_flight(config.max_in_flight);
        Self::new(endpoint, config.model.clone())
    }

    fn complete(&self, messages: &[Message]) -> Result<String, ReasonError> {
        let resp: ChatResponse = self
            .client
            .post(&ChatRequest {
                model: &self.model,
                temperature: 0.0,
                messages,
            })
            .map_err(|e| match e {
                RemoteError::Unavailable(m) => ReasonError::BackendUnavailable(m),
                RemoteError::BadResponse(m) => ReasonError::UnparseableResponse(m),
            })?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ReasonError::UnparseableResponse("reply has no choices".into()))
    }
}

/// Drops citations of documents that were not in the context.
fn restrict_to_context(ctx: &ReasoningContext, mut out: ReasoningOutput) -> ReasoningOutput {
    let known = ctx.hit_ids();
    for t in &mut out.tests {
        let before = t.supporting_doc_ids.len();
        t.supporting_doc_ids.retain(|id| known.contains(id));
        if t.supporting_doc_ids.len() != before {
            tracing::warn!(test_id = %t.test_id, "dropped citations outside the retrieved context");
        }
    }
    out
}

impl Reasoner for ChatReasoner {
    fn analyze(&self, ctx: &ReasoningContext) -> Result<ReasoningOutput, ReasonError> {
        ctx.validate()?;
        let mut messages = vec![
            Message::new("system", system_prompt()),
            Message::new("user", render_prompt(ctx)),
        ];
        let first = self.complete(&messages)?;
        match parse_response(ctx.layer, &first) {
            Ok(out) => Ok(restrict_to_context(ctx, out)),
            Err(_) => {
                tracing::debug!(layer = %ctx.layer, "reply unparseable, sending repair request");
                messages.push(Message::new("assistant", first));
                messages.push(Message::new("user", render_repair_prompt(ctx.layer)));
                let second = self.complete(&messages)?;
                parse_response(ctx.layer, &second).map(|out| restrict_to_context(ctx, out))
            }
        }
    }
}
