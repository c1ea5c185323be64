//! Run transcript: every chat exchange and retrieval, in call order.
//!
//! Entries are kept in memory and, when a sink is attached, appended to a
//! JSON Lines file as they happen.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Chat,
    Retrieval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub kind: EntryKind,
    pub template_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub request: Value,
    pub response: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
    pub tokens: Option<TokenUsage>,
}

#[derive(Default)]
struct State {
    entries: Vec<TranscriptEntry>,
    sink: Option<BufWriter<File>>,
}

/// Shared, append-only transcript. Clones refer to the same log.
#[derive(Clone, Default)]
pub struct Transcript {
    state: Arc<Mutex<State>>,
}

impl std::fmt::Debug for Transcript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transcript").field("entries", &self.len()).finish()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends future entries to `path` (created if missing).
    pub fn with_sink(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let transcript = Self::new();
        transcript.state.lock().expect("transcript poisoned").sink = Some(BufWriter::new(file));
        Ok(transcript)
    }

    /// Assigns the next sequence number and records the entry.
    pub fn push(&self, mut entry: TranscriptEntry) -> u64 {
        let mut state = self.state.lock().expect("transcript poisoned");
        let seq = state.entries.len() as u64;
        entry.seq = seq;
        if let Some(sink) = state.sink.as_mut() {
            let line = serde_json::to_string(&entry).expect("transcript entries serialize");
            if let Err(err) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::warn!(%err, "failed to append transcript line");
            }
        }
        state.entries.push(entry);
        seq
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.state.lock().expect("transcript poisoned").entries.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("transcript poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serializes all entries as JSON Lines.
    pub fn to_jsonl(&self) -> String {
        let state = self.state.lock().expect("transcript poisoned");
        let mut out = String::new();
        for entry in &state.entries {
            out.push_str(&serde_json::to_string(entry).expect("transcript entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn count(&self, kind: EntryKind, template_id: &str) -> usize {
        let state = self.state.lock().expect("transcript poisoned");
        state
            .entries
            .iter()
            .filter(|e| e.kind == kind && e.template_id == template_id)
            .count()
    }
}
