//! OpenAI-compatible chat-completions adapter.

use std::time::Duration;

use anyhow::{Context, Result};
use credence_core::llm::{ChatClient, ChatRequest, ChatRole, ClientError};
use serde::Deserialize;
use serde_json::json;

pub const ENV_API_KEY: &str = "CREDENCE_LLM_API_KEY";
pub const ENV_BASE_URL: &str = "CREDENCE_LLM_BASE_URL";
pub const ENV_MODEL: &str = "CREDENCE_LLM_MODEL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
}

impl EndpointConfig {
    /// Reads the endpoint from the environment; the key falls back to
    /// `OPENAI_API_KEY`.
    pub fn from_env() -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        EndpointConfig {
            base_url: var(ENV_BASE_URL).unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            api_key: var(ENV_API_KEY).or_else(|| var("OPENAI_API_KEY")),
            model: var(ENV_MODEL),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct OpenAiClient {
    http: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl OpenAiClient {
    pub fn new(config: &EndpointConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .context("building the HTTP client")?;
        Ok(OpenAiClient {
            http,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: config.api_key.clone(),
        })
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

pub fn request_body(request: &ChatRequest) -> serde_json::Value {
    let mut messages = vec![json!({"role": "system", "content": request.system})];
    messages.extend(request.messages.iter().map(|m| {
        let role = match m.role {
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        json!({"role": role, "content": m.content})
    }));
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": messages,
    })
}

impl ChatClient for OpenAiClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut call = self.http.post(&self.url).json(&request_body(request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ClientError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(ClientError::Fatal(format!("HTTP {status}: {body}")));
        }
        let completion: Completion = response
            .json()
            .map_err(|e| ClientError::Transient(format!("unreadable completion: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Transient("completion without content".into()))
    }
}
