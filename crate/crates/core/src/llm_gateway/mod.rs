//! Chat-completion access: clients, prompt templates, retries and transcripts.

pub(crate) mod http;
pub mod mock;
mod prompts;
mod template;
pub mod transcript;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;

pub use http::OpenAiChatClient;
pub use mock::{Matcher, Outcome, ScriptEntry, ScriptedMock};
pub use prompts::{
    PromptPaths, PromptSet, PromptSetError, FORMALIZATION_ID, INFORMAL_PROOF_ID, KEYWORDS_ID, SEGMENTATION_ID,
    TRANSCRIPTION_ID,
};
pub use template::{PromptTemplate, TemplateError};
pub use transcript::{EntryKind, Transcript, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageData {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl ImageData {
    pub fn png(bytes: Vec<u8>) -> Self {
        Self {
            media_type: "image/png".into(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub content: String,
    pub images: Vec<ImageData>,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            images: Vec::new(),
        }
    }
}

/// Per-request decoding parameters. `model: None` uses the client's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            model: None,
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub params: DecodingParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Network failures, timeouts, rate limits and 5xx responses.
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("request rejected: {0}")]
    Permanent(String),
    #[error("mock script exhausted at call {call}")]
    ScriptExhausted { call: usize },
    #[error("no mock script entry matches call {call}")]
    NoMatch { call: usize },
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        matches!(self, TransportError::Transient(_))
    }
}

/// A chat-completion backend. Implementations must be safe for concurrent calls.
pub trait ChatClient: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatReply, TransportError>;

    /// Model identifier recorded in reports.
    fn model_name(&self) -> String;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("no messages to send")]
    NoMessages,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error(transparent)]
    Rejected(TransportError),
    #[error("mock script exhausted at call {call}")]
    ScriptExhausted { call: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            backoff_base: Duration::ZERO,
        }
    }

    fn delay(&self, failed_attempts: u32) -> Duration {
        self.backoff_base
            .saturating_mul(1u32 << (failed_attempts.saturating_sub(1)).min(16))
    }
}

/// Identifies a call in the transcript.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallContext {
    pub template_id: String,
    pub problem: Option<String>,
    pub iteration: Option<usize>,
}

impl CallContext {
    pub fn new(template_id: impl Into<String>) -> Self {
        Self {
            template_id: template_id.into(),
            ..Self::default()
        }
    }

    pub fn for_problem(template_id: impl Into<String>, problem: &str, iteration: usize) -> Self {
        Self {
            template_id: template_id.into(),
            problem: Some(problem.to_string()),
            iteration: Some(iteration),
        }
    }
}

/// Front door for all chat traffic: retries, empty-response detection and
/// transcript logging.
#[derive(Clone)]
pub struct Gateway {
    client: Arc<dyn ChatClient>,
    retry: RetryPolicy,
    transcript: Transcript,
    clock: Clock,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model", &self.client.model_name())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self {
            client,
            retry: RetryPolicy::default(),
            transcript: Transcript::new(),
            clock: Clock::System,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = transcript;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn model_name(&self) -> String {
        self.client.model_name()
    }

    /// Sends `messages` and returns the response text.
    ///
    /// Transient transport failures are retried up to `max_retries` times with
    /// exponential backoff. Every call is logged exactly once, successful or not.
    pub fn complete(
        &self,
        ctx: &CallContext,
        messages: &[Message],
        params: &DecodingParams,
    ) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::NoMessages);
        }
        let request = ChatRequest {
            messages: messages.to_vec(),
            params: params.clone(),
        };
        let watch = self.clock.start();
        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            match self.client.send(&request) {
                Ok(reply) => break Ok(reply),
                Err(err) if err.is_transient() && attempts <= self.retry.max_retries => {
                    tracing::debug!(attempt = attempts, %err, "transient chat failure, retrying");
                    let delay = self.retry.delay(attempts);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
                Err(err) if err.is_transient() => {
                    break Err(GatewayError::RetriesExhausted {
                        attempts,
                        last: err.to_string(),
                    })
                }
                Err(TransportError::ScriptExhausted { call }) => break Err(GatewayError::ScriptExhausted { call }),
                Err(err) => break Err(GatewayError::Rejected(err)),
            }
        };
        let result = match result {
            Ok(reply) if reply.text.trim().is_empty() => Err((GatewayError::EmptyResponse, Some(reply))),
            Ok(reply) => Ok(reply),
            Err(err) => Err((err, None)),
        };

        let (response, error, tokens) = match &result {
            Ok(reply) => (json!(reply.text), None, reply.usage),
            Err((err, reply)) => (
                reply.as_ref().map(|r| json!(r.text)).unwrap_or(serde_json::Value::Null),
                Some(err.to_string()),
                reply.as_ref().and_then(|r| r.usage),
            ),
        };
        self.transcript.push(TranscriptEntry {
            seq: 0,
            kind: EntryKind::Chat,
            template_id: ctx.template_id.clone(),
            problem: ctx.problem.clone(),
            iteration: ctx.iteration,
            request: recorded_request(&request, &self.client.model_name()),
            response,
            error,
            attempts,
            latency_ms: watch.elapsed_ms(),
            tokens,
        });
        result.map(|reply| reply.text).map_err(|(err, _)| err)
    }

    /// Renders `template` and completes it.
    pub fn complete_template(
        &self,
        ctx: &CallContext,
        template: &PromptTemplate,
        bindings: &[(&str, &str)],
        params: &DecodingParams,
    ) -> Result<String, GatewayError> {
        let messages = template.render(bindings)?;
        self.complete(ctx, &messages, params)
    }
}

fn recorded_request(request: &ChatRequest, default_model: &str) -> serde_json::Value {
    let messages: Vec<_> = request
        .messages
        .iter()
        .map(|m| {
            let mut value = json!({ "role": m.role.as_str(), "content": m.content });
            if !m.images.is_empty() {
                let images: Vec<_> = m
                    .images
                    .iter()
                    .map(|img| {
                        let digest = Sha256::digest(&img.bytes);
                        json!({
                            "media_type": img.media_type,
                            "bytes": img.bytes.len(),
                            "sha256": hex_string(&digest),
                        })
                    })
                    .collect();
                value["images"] = json!(images);
            }
            value
        })
        .collect();
    json!({
        "model": request.params.model.clone().unwrap_or_else(|| default_model.to_string()),
        "temperature": request.params.temperature,
        "max_tokens": request.params.max_tokens,
        "messages": messages,
    })
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
