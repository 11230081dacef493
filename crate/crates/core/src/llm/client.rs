//! Provider-agnostic chat completion interface and offline clients.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::transcript::{TranscriptEntry, TranscriptRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Stable 64-bit FNV-1a fingerprint of the full request.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    /// Worth retrying (timeouts, rate limits, server errors).
    #[error("transient failure: {0}")]
    Transient(String),
    /// Not worth retrying (bad credentials, malformed request).
    #[error("{0}")]
    Fatal(String),
}

/// `{model, system text, messages, temperature} -> reply text`.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

/// Answers from a fixed queue of replies, in order.
#[derive(Debug, Default)]
pub struct CannedClient {
    replies: Mutex<VecDeque<String>>,
}

impl CannedClient {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        CannedClient {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
        }
    }
}

impl ChatClient for CannedClient {
    fn complete(&self, _request: &ChatRequest) -> Result<String, ClientError> {
        self.replies
            .lock()
            .expect("canned replies")
            .pop_front()
            .ok_or_else(|| ClientError::Fatal("no canned reply left".into()))
    }
}

/// Replays the assistant turns of a recorded transcript. In strict mode
/// each request must match the recorded request fingerprint.
#[derive(Debug)]
pub struct ReplayClient {
    turns: Vec<(Option<String>, String)>,
    next: Mutex<usize>,
    strict: bool,
}

impl ReplayClient {
    pub fn from_transcript(entries: &[TranscriptEntry], strict: bool) -> Self {
        let mut turns = Vec::new();
        let mut fingerprint = None;
        for e in entries {
            match e.role {
                TranscriptRole::User => fingerprint = e.request.clone(),
                TranscriptRole::Assistant => turns.push((fingerprint.take(), e.text.clone())),
                TranscriptRole::System | TranscriptRole::Event => {}
            }
        }
        ReplayClient {
            turns,
            next: Mutex::new(0),
            strict,
        }
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut next = self.next.lock().expect("replay cursor");
        let (expected, reply) = self
            .turns
            .get(*next)
            .ok_or_else(|| ClientError::Fatal(format!("transcript exhausted at turn {}", *next)))?;
        if self.strict {
            if let Some(expected) = expected {
                if *expected != request.fingerprint() {
                    return Err(ClientError::Fatal(format!(
                        "request at turn {} differs from the recording",
                        *next
                    )));
                }
            }
        }
        *next += 1;
        Ok(reply.clone())
    }
}

/// Fails transiently a fixed number of times, then defers to `inner`.
#[derive(Debug)]
pub struct FlakyClient<C> {
    pub inner: C,
    failures_left: Mutex<usize>,
}

impl<C> FlakyClient<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        FlakyClient {
            inner,
            failures_left: Mutex::new(failures),
        }
    }
}

impl<C: ChatClient> ChatClient for FlakyClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut left = self.failures_left.lock().expect("failure counter");
        if *left > 0 {
            *left -= 1;
            return Err(ClientError::Transient("simulated outage".into()));
        }
        drop(left);
        self.inner.complete(request)
    }
}
