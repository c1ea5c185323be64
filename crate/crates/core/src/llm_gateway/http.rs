//! HTTP client for the chat-completions wire protocol.

use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatClient, ChatReply, ChatRequest, Message, TokenUsage, TransportError};

/// POSTs `body` to `url` and decodes the JSON response.
///
/// Connection errors, timeouts, 429 and 5xx are transient; other non-2xx
/// statuses are permanent.
pub(crate) fn post_json(
    http: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<Value, TransportError> {
    let mut req = http.post(url).json(body);
    if let Some(key) = api_key.filter(|k| !k.is_empty()) {
        req = req.bearer_auth(key);
    }
    let response = req.send().map_err(|e| TransportError::Transient(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        let body = response.text().unwrap_or_default();
        let msg = format!("HTTP {}: {}", status.as_u16(), truncate(&body, 400));
        return if status.as_u16() == 429 || status.is_server_error() {
            Err(TransportError::Transient(msg))
        } else {
            Err(TransportError::Permanent(msg))
        };
    }
    response
        .json::<Value>()
        .map_err(|e| TransportError::Transient(format!("malformed response body: {e}")))
}

pub(crate) fn http_client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .expect("reqwest client configuration is static")
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Live client for any endpoint speaking the chat-completions protocol.
pub struct OpenAiChatClient {
    http: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for OpenAiChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiChatClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl OpenAiChatClient {
    /// `url` is the full endpoint, e.g. `https://api.openai.com/v1/chat/completions`.
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            http: http_client(Duration::from_secs(600)),
            url: url.into(),
            model: model.into(),
            api_key,
        }
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": request.params.model.as_deref().unwrap_or(&self.model),
            "messages": messages,
            "temperature": request.params.temperature,
        });
        if let Some(max) = request.params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

fn wire_message(message: &Message) -> Value {
    if message.images.is_empty() {
        return json!({ "role": message.role.as_str(), "content": message.content });
    }
    let mut parts = vec![json!({ "type": "text", "text": message.content })];
    for image in &message.images {
        let data = base64::engine::general_purpose::STANDARD.encode(&image.bytes);
        parts.push(json!({
            "type": "image_url",
            "image_url": { "url": format!("data:{};base64,{}", image.media_type, data) },
        }));
    }
    json!({ "role": message.role.as_str(), "content": parts })
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(crate) fn parse_chat_response(value: Value) -> Result<ChatReply, TransportError> {
    let wire: WireResponse = serde_json::from_value(value)
        .map_err(|e| TransportError::Permanent(format!("unexpected response shape: {e}")))?;
    let text = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .unwrap_or_default();
    Ok(ChatReply {
        text,
        usage: wire.usage.map(|u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        }),
    })
}

impl ChatClient for OpenAiChatClient {
    fn send(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let body = self.request_body(request);
        let value = post_json(&self.http, &self.url, self.api_key.as_deref(), &body)?;
        parse_chat_response(value)
    }

    fn model_name(&self) -> String {
        self.model.clone()
    }
}
