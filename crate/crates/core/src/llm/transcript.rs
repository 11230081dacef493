//! Verbatim conversation logs as newline-delimited JSON.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptRole {
    System,
    User,
    Assistant,
    /// Gate results, retries, disqualification.
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session: String,
    pub turn: usize,
    pub role: TranscriptRole,
    pub text: String,
    /// Parsed decision for assistant turns, when parsing succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Value>,
    /// Fingerprint of the full request, on user turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
}

/// Append-only transcript file; appends from concurrent agents are
/// serialized line by line.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptWriter {
    pub fn append_to(path: &Path) -> Result<Self, LlmError> {
        let io = |source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(TranscriptWriter {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn write(&self, entries: &[TranscriptEntry]) -> Result<(), LlmError> {
        let mut text = String::new();
        for e in entries {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        let mut file = self.file.lock().expect("transcript file");
        file.write_all(text.as_bytes())
            .map_err(|source| LlmError::Io {
                path: self.path.clone(),
                source,
            })?;
        file.flush().map_err(|source| LlmError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Reads a transcript file; with `session`, keeps only that session.
pub fn read_transcript(
    path: &Path,
    session: Option<&str>,
) -> Result<Vec<TranscriptEntry>, LlmError> {
    let file = File::open(path).map_err(|source| LlmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line)?;
        if session.is_none_or(|s| s == entry.session) {
            out.push(entry);
        }
    }
    Ok(out)
}
