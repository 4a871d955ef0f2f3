//! Minimal chat-completion client.
//!
//! Both the chat-backed user simulator and the chat planner policy speak to
//! a generic OpenAI-compatible endpoint configured by base URL, model name,
//! and a credential environment variable. The transport is a trait so tests
//! can substitute canned completions; all requests pin temperature 0.0.

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

pub const CHAT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Error)]
pub enum EndpointError {
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("endpoint request failed: {0}")]
    Request(String),
    #[error("endpoint reply had no completion text: {0}")]
    BadReply(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    /// PNG bytes to send as an inline image.
    ImagePng(Vec<u8>),
    /// A screenshot referenced by digest only. Policies swap recent refs for
    /// real pixels; anything older is sent as this textual placeholder to
    /// bound context growth.
    ScreenshotRef(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self { role, parts: vec![ContentPart::Text(text.into())] }
    }

    /// Concatenated text of the message with image placeholders, used for
    /// deterministic prompt assertions.
    pub fn flat_text(&self) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                ContentPart::Text(t) => t.clone(),
                ContentPart::ImagePng(_) => "[image]".to_string(),
                ContentPart::ScreenshotRef(d) => format!("[screenshot {d}]"),
            })
            .collect::<Vec<_>>()
            .join("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

pub trait ChatTransport: Send {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError>;
}

/// Endpoint coordinates. The credential is read from the named environment
/// variable at request time and never persisted anywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub credential_env: String,
}

pub struct HttpChatTransport {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(config: EndpointConfig) -> Self {
        Self { config, client: reqwest::blocking::Client::new() }
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }
}

/// Wire shape of one message: bare string when text-only, content-part
/// array when images are attached.
pub fn message_to_wire(msg: &ChatMessage) -> Value {
    let all_text = msg.parts.iter().all(|p| !matches!(p, ContentPart::ImagePng(_)));
    let content = if all_text {
        Value::String(msg.flat_text())
    } else {
        Value::Array(
            msg.parts
                .iter()
                .map(|p| match p {
                    ContentPart::Text(t) => json!({"type": "text", "text": t}),
                    ContentPart::ScreenshotRef(d) => {
                        json!({"type": "text", "text": format!("[screenshot {d}]")})
                    }
                    ContentPart::ImagePng(bytes) => {
                        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                        json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
                    }
                })
                .collect(),
        )
    };
    json!({"role": msg.role.as_str(), "content": content})
}

pub fn request_to_wire(request: &ChatRequest) -> Value {
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": request.messages.iter().map(message_to_wire).collect::<Vec<_>>(),
    })
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
        let key = std::env::var(&self.config.credential_env)
            .map_err(|_| EndpointError::MissingCredential(self.config.credential_env.clone()))?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let reply: Value = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(&request_to_wire(request))
            .send()
            .and_then(reqwest::blocking::Response::error_for_status)
            .map_err(|e| EndpointError::Request(e.to_string()))?
            .json()
            .map_err(|e| EndpointError::Request(e.to_string()))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| EndpointError::BadReply(reply.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_only_messages_use_bare_string_content() {
        let wire = message_to_wire(&ChatMessage::text(Role::System, "hello"));
        assert_eq!(wire, serde_json::json!({"role": "system", "content": "hello"}));
    }

    #[test]
    fn image_parts_become_data_uris() {
        let msg = ChatMessage {
            role: Role::User,
            parts: vec![ContentPart::Text("look".into()), ContentPart::ImagePng(vec![1, 2, 3])],
        };
        let wire = message_to_wire(&msg);
        let parts = wire["content"].as_array().unwrap();
        assert_eq!(parts[0]["text"], "look");
        assert!(parts[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    }

    #[test]
    fn requests_pin_the_configured_temperature() {
        let req = ChatRequest {
            model: "m".into(),
            temperature: CHAT_TEMPERATURE,
            messages: vec![ChatMessage::text(Role::User, "q")],
        };
        let wire = request_to_wire(&req);
        assert_eq!(wire["temperature"], 0.0);
        assert_eq!(wire["model"], "m");
    }

    #[test]
    fn missing_credential_is_reported_without_a_network_call() {
        let t = HttpChatTransport::new(EndpointConfig {
            base_url: "http://127.0.0.1:1".into(),
            model: "m".into(),
            credential_env: "MWORLD_TEST_NO_SUCH_VAR".into(),
        });
        let req = ChatRequest { model: "m".into(), temperature: 0.0, messages: vec![] };
        assert!(matches!(t.complete(&req), Err(EndpointError::MissingCredential(_))));
    }
}
