//! Chat and embedding client with record/replay cassettes.
//!
//! Every request has a canonical JSON form (sorted keys, images reduced to
//! their SHA-256) whose hash is the cassette key. In replay mode the client
//! answers from the cassette only and never touches the transport.

mod cassette;
mod transport;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::Embedder;

pub use cassette::{Cassette, CassetteEntry, CassetteMode};
pub use transport::{HttpTransport, OfflineTransport, Transport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("cassette miss: no recorded response for request {digest}")]
    CassetteMiss { digest: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}")]
    Status { status: u16 },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("turn {turn}: {source}")]
    Chain {
        turn: usize,
        #[source]
        source: Box<LlmError>,
    },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("cassette file {path}: {detail}")]
    CassetteFile { path: String, detail: String },
}

impl LlmError {
    /// The underlying error of a chain failure.
    pub fn root(&self) -> &LlmError {
        match self {
            LlmError::Chain { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_cassette_miss(&self) -> bool {
        matches!(self.root(), LlmError::CassetteMiss { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// A PNG image attached to a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub png: Arc<Vec<u8>>,
}

impl ImageAttachment {
    pub fn new(png: Vec<u8>) -> Self {
        ImageAttachment { png: Arc::new(png) }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.png.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub image: Option<ImageAttachment>,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), image: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into(), image: None }
    }

    pub fn with_image(mut self, png: Vec<u8>) -> Self {
        self.image = Some(ImageAttachment::new(png));
        self
    }

    fn check(&self) -> Result<(), LlmError> {
        if self.content.is_empty() && self.image.is_none() {
            return Err(LlmError::InvalidMessage("empty content without an image".into()));
        }
        Ok(())
    }

    fn canonical(&self) -> Value {
        let mut m = json!({ "role": self.role, "content": self.content });
        if let Some(img) = &self.image {
            m["image_sha256"] = Value::String(img.sha256());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams { temperature: 0.0, seed: 0, max_tokens: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub endpoint: String,
    pub model: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub params: ChatParams,
}

impl ChatRequest {
    /// Canonical form used for hashing and stored in cassettes.
    pub fn canonical(&self) -> Value {
        json!({
            "kind": "chat",
            "endpoint": self.endpoint,
            "model": self.model,
            "system": self.system,
            "messages": self.messages.iter().map(ChatMessage::canonical).collect::<Vec<_>>(),
            "params": self.params,
        })
    }

    pub fn digest(&self) -> String {
        digest_of(&self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedInput {
    Text(String),
    Image(ImageAttachment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedRequest {
    pub endpoint: String,
    pub model: String,
    pub input: EmbedInput,
}

impl EmbedRequest {
    pub fn canonical(&self) -> Value {
        let input = match &self.input {
            EmbedInput::Text(t) => json!({ "text": t }),
            EmbedInput::Image(img) => json!({ "image_sha256": img.sha256() }),
        };
        json!({ "kind": "embed", "endpoint": self.endpoint, "model": self.model, "input": input })
    }

    pub fn digest(&self) -> String {
        digest_of(&self.canonical())
    }
}

fn digest_of(canonical: &Value) -> String {
    let bytes = serde_json::to_vec(canonical).expect("json values serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Model client bound to one endpoint, model and cassette.
#[derive(Clone)]
pub struct LlmClient {
    pub endpoint: String,
    pub model: String,
    pub system: String,
    pub params: ChatParams,
    transport: Arc<dyn Transport>,
    cassette: Arc<Cassette>,
}

impl LlmClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        transport: Arc<dyn Transport>,
        cassette: Arc<Cassette>,
    ) -> Self {
        LlmClient {
            endpoint: endpoint.into(),
            model: model.into(),
            system: String::new(),
            params: ChatParams::default(),
            transport,
            cassette,
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = system.into();
        self
    }

    pub fn with_model(&self, model: impl Into<String>) -> Self {
        LlmClient { model: model.into(), ..self.clone() }
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            system: self.system.clone(),
            messages,
            params: self.params.clone(),
        }
    }

    /// One chat completion over the given conversation.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, LlmError> {
        for m in messages {
            m.check()?;
        }
        let req = self.request(messages.to_vec());
        let response = self.cassette.lookup_or(&req.digest(), req.canonical(), || {
            self.transport.chat(&req).map(|content| json!({ "content": content }))
        })?;
        let content = response["content"]
            .as_str()
            .ok_or_else(|| LlmError::Malformed("cassette response lacks `content`".into()))?;
        Ok(ChatMessage::assistant(content))
    }

    /// Issue the prompts in order within one conversation. Errors carry the
    /// 1-based turn index.
    pub fn run_chain(&self, prompts: &[ChatMessage]) -> Result<Vec<ChatMessage>, LlmError> {
        if prompts.is_empty() {
            return Err(LlmError::InvalidMessage("empty prompt chain".into()));
        }
        let mut conversation = Vec::with_capacity(prompts.len() * 2);
        let mut replies = Vec::with_capacity(prompts.len());
        for (i, prompt) in prompts.iter().enumerate() {
            conversation.push(prompt.clone());
            let reply = self
                .chat(&conversation)
                .map_err(|e| LlmError::Chain { turn: i + 1, source: Box::new(e) })?;
            conversation.push(reply.clone());
            replies.push(reply);
        }
        Ok(replies)
    }

    pub fn embed(&self, input: EmbedInput) -> Result<Vec<f32>, LlmError> {
        let req = EmbedRequest { endpoint: self.endpoint.clone(), model: self.model.clone(), input };
        let response = self.cassette.lookup_or(&req.digest(), req.canonical(), || {
            self.transport.embed(&req).map(|v| json!({ "embedding": v }))
        })?;
        serde_json::from_value(response["embedding"].clone())
            .map_err(|e| LlmError::Malformed(format!("cassette embedding: {e}")))
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>, LlmError> {
        self.embed(EmbedInput::Text(text.to_string()))
    }
}

impl Embedder for LlmClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed_image(&self, png: &[u8]) -> Result<Vec<f32>, LlmError> {
        self.embed(EmbedInput::Image(ImageAttachment::new(png.to_vec())))
    }
}
