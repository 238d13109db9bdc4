use std::collections::VecDeque;
use std::path::Path;

use super::{Backend, BackendKind, ChatExchange, ChatRequest, LlmError, TranscriptEntry, TranscriptLog};

/// Serves recorded responses in order. Each request must match the
/// recorded request messages exactly.
pub struct ReplayBackend {
    pending: VecDeque<TranscriptEntry>,
    served: usize,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self {
            pending: entries.into(),
            served: 0,
        }
    }

    /// Entries of `run_id` from a transcript file, in step order.
    pub fn from_file(path: &Path, run_id: &str) -> Result<Self, LlmError> {
        let mut entries: Vec<_> = TranscriptLog::read_all(path)?
            .into_iter()
            .filter(|e| e.run_id == run_id)
            .collect();
        entries.sort_by_key(|e| e.step);
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.pending.len()
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let entry = self
            .pending
            .pop_front()
            .ok_or(LlmError::ReplayExhausted(self.served))?;
        if entry.request_messages != request.messages {
            return Err(LlmError::ReplayMismatch { step: entry.step });
        }
        self.served += 1;
        Ok(ChatExchange {
            request_messages: entry.request_messages,
            response_text: entry.response_text,
            token_usage: entry.token_usage,
            latency_s: 0.0,
            backend: BackendKind::Replay,
        })
    }
}
