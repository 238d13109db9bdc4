use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendKind, ChatExchange, ChatMessage, LlmError, TokenUsage};

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub run_id: String,
    pub step: usize,
    pub backend: BackendKind,
    pub model: String,
    pub request_messages: Vec<ChatMessage>,
    pub response_text: String,
    pub token_usage: TokenUsage,
    pub latency_s: f64,
}

impl TranscriptEntry {
    pub fn from_exchange(run_id: &str, step: usize, model: &str, ex: &ChatExchange) -> Self {
        Self {
            run_id: run_id.to_owned(),
            step,
            backend: ex.backend,
            model: model.to_owned(),
            request_messages: ex.request_messages.clone(),
            response_text: ex.response_text.clone(),
            token_usage: ex.token_usage,
            latency_s: ex.latency_s,
        }
    }
}

/// Append-only JSONL transcript; appends from several threads are serialized.
pub struct TranscriptLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptLog {
    pub fn create(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), LlmError> {
        let mut line = serde_json::to_string(entry).map_err(|e| LlmError::Transcript(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().expect("transcript lock poisoned");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| LlmError::Transcript(e.to_string()))
    }

    pub fn read_all(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
        let f = File::open(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Transcript(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(entry);
        }
        Ok(out)
    }
}
