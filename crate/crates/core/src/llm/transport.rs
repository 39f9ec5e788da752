use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{json, Value};

use super::{ChatMessage, ChatRequest, EmbedInput, EmbedRequest, LlmError, Role};

/// Wire access to a model provider.
pub trait Transport: Send + Sync {
    /// Content of the assistant reply.
    fn chat(&self, request: &ChatRequest) -> Result<String, LlmError>;
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, LlmError>;
}

/// Refuses every call. Used when the run must stay offline.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn chat(&self, _: &ChatRequest) -> Result<String, LlmError> {
        Err(LlmError::Transport("network access is disabled".into()))
    }

    fn embed(&self, _: &EmbedRequest) -> Result<Vec<f32>, LlmError> {
        Err(LlmError::Transport("network access is disabled".into()))
    }
}

/// Chat-completions style JSON over HTTP.
///
/// Chat requests go to `{endpoint}/chat/completions` with images as
/// `image_url` data URIs; embedding requests go to `{endpoint}/embeddings`
/// and expect `{"data": [{"embedding": [...]}]}`.
pub struct HttpTransport {
    agent: ureq::Agent,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl HttpTransport {
    pub fn new(api_key: Option<String>, max_retries: u32, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent, api_key, max_retries, backoff: Duration::from_millis(500) }
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, LlmError> {
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let err = match req.send_json(body) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| LlmError::Malformed(e.to_string()));
                }
                Err(ureq::Error::StatusCode(status)) => LlmError::Status { status },
                Err(e) => LlmError::Transport(e.to_string()),
            };
            let retryable = match err {
                LlmError::Status { status } => status == 429 || status >= 500,
                _ => true,
            };
            if !retryable || attempt >= self.max_retries {
                return Err(err);
            }
            tracing::warn!(%url, attempt, "retrying after {err}");
            thread::sleep(self.backoff * 2u32.pow(attempt.min(6)));
            attempt += 1;
        }
    }
}

fn data_uri(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", BASE64.encode(png))
}

fn wire_message(m: &ChatMessage) -> Value {
    match &m.image {
        None => json!({ "role": m.role, "content": m.content }),
        Some(img) => json!({
            "role": m.role,
            "content": [
                { "type": "text", "text": m.content },
                { "type": "image_url", "image_url": { "url": data_uri(&img.png) } }
            ]
        }),
    }
}

pub(crate) fn chat_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system.is_empty() {
        messages.push(json!({ "role": Role::System, "content": req.system }));
    }
    messages.extend(req.messages.iter().map(wire_message));
    json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.params.temperature,
        "seed": req.params.seed,
        "max_tokens": req.params.max_tokens,
    })
}

pub(crate) fn embed_body(req: &EmbedRequest) -> Value {
    let input = match &req.input {
        EmbedInput::Text(t) => json!([{ "type": "text", "text": t }]),
        EmbedInput::Image(img) => json!([{ "type": "image", "image": data_uri(&img.png) }]),
    };
    json!({ "model": req.model, "input": input })
}

fn url(endpoint: &str, path: &str) -> String {
    format!("{}/{path}", endpoint.trim_end_matches('/'))
}

impl Transport for HttpTransport {
    fn chat(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let resp = self.post(&url(&request.endpoint, "chat/completions"), &chat_body(request))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))
    }

    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, LlmError> {
        let resp = self.post(&url(&request.endpoint, "embeddings"), &embed_body(request))?;
        serde_json::from_value(resp["data"][0]["embedding"].clone())
            .map_err(|e| LlmError::Malformed(format!("data[0].embedding: {e}")))
    }
}
