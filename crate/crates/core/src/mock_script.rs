//! Offline mock definitions loaded from a JSON file.
//!
//! ```json
//! {
//!   "chat": [
//!     {"response": "algebra, substitution"},
//!     {"response": "...", "contains": "Formalize"},
//!     {"fail": "connection reset"}
//!   ],
//!   "embedding": {"hashing": 64},
//!   "verifier": ["failed", {"status": "verified"}]
//! }
//! ```
//!
//! `chat` entries are consumed once each, first matching entry wins
//! (`contains` and `index` restrict which call an entry answers).
//! `embedding` is either `{"hashing": d}` (default, d = 64) or
//! `{"vectors": [[...], ...]}` returned in call order. Without a `verifier`
//! list the configured Lean toolchain is used.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::knowledge_base::{EmbeddingClient, HashingEmbedder, ScriptedEmbedder};
use crate::lean_verifier::{Diagnostic, ScriptedVerifier, Verdict, VerdictStatus};
use crate::llm_gateway::{Matcher, ScriptEntry, ScriptedMock};

pub const DEFAULT_HASHING_DIMENSION: usize = 64;

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("mock script {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("mock script {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("mock script chat entry {index}: {detail}")]
    Entry { index: usize, detail: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatSpec {
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    fail: Option<String>,
    #[serde(default)]
    contains: Option<String>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Hashing(usize),
    Vectors(Vec<Vec<f64>>),
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hashing(DEFAULT_HASHING_DIMENSION)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum VerdictSpec {
    Status(VerdictStatus),
    Full {
        status: VerdictStatus,
        #[serde(default)]
        diagnostics: Vec<Diagnostic>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    #[serde(default)]
    chat: Vec<ChatSpec>,
    #[serde(default)]
    embedding: EmbeddingSpec,
    #[serde(default)]
    verifier: Option<Vec<VerdictSpec>>,
}

#[derive(Debug, Clone)]
pub struct MockScript {
    pub chat: Vec<ScriptEntry>,
    pub embedding: EmbeddingSpec,
    pub verifier: Option<Vec<Verdict>>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockScriptError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            MockScriptError::Parse { detail, .. } => MockScriptError::Parse {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, MockScriptError> {
        let raw: RawScript = serde_json::from_str(text).map_err(|e| MockScriptError::Parse {
            path: PathBuf::new(),
            detail: e.to_string(),
        })?;
        let chat = raw
            .chat
            .into_iter()
            .enumerate()
            .map(|(index, spec)| chat_entry(index, spec))
            .collect::<Result<_, _>>()?;
        let verifier = raw.verifier.map(|list| {
            list.into_iter()
                .map(|spec| match spec {
                    VerdictSpec::Status(status) => Verdict::new(status, vec![]),
                    VerdictSpec::Full { status, diagnostics } => Verdict::new(status, diagnostics),
                })
                .collect()
        });
        Ok(Self {
            chat,
            embedding: raw.embedding,
            verifier,
        })
    }

    pub fn chat_client(&self) -> ScriptedMock {
        ScriptedMock::new(self.chat.clone())
    }

    pub fn embedding_client(&self) -> Box<dyn EmbeddingClient> {
        match &self.embedding {
            EmbeddingSpec::Hashing(d) => Box::new(HashingEmbedder::new(*d)),
            EmbeddingSpec::Vectors(v) => Box::new(ScriptedEmbedder::new(v.clone())),
        }
    }

    pub fn verifier(&self) -> Option<ScriptedVerifier> {
        self.verifier.clone().map(ScriptedVerifier::new)
    }
}

fn chat_entry(index: usize, spec: ChatSpec) -> Result<ScriptEntry, MockScriptError> {
    let entry = match (spec.response, spec.fail) {
        (Some(text), None) => ScriptEntry::reply(text),
        (None, Some(message)) => ScriptEntry::fail(message),
        _ => {
            return Err(MockScriptError::Entry {
                index,
                detail: "exactly one of `response` or `fail` is required".into(),
            })
        }
    };
    Ok(match (spec.contains, spec.index) {
        (None, None) => entry,
        (Some(needle), None) => entry.when(Matcher::Contains(needle)),
        (None, Some(i)) => entry.when(Matcher::Index(i)),
        (Some(_), Some(_)) => {
            return Err(MockScriptError::Entry {
                index,
                detail: "`contains` and `index` cannot be combined".into(),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::Outcome;

    #[test]
    fn parses_all_sections() {
        let script = MockScript::parse(
            r#"{
                "chat": [
                    {"response": "a"},
                    {"response": "b", "contains": "Formalize"},
                    {"fail": "reset", "index": 3}
                ],
                "embedding": {"vectors": [[1.0, 0.0]]},
                "verifier": ["failed", {"status": "verified"},
                    {"status": "failed", "diagnostics": [{"line": 3, "column": 2, "message": "bad"}]}]
            }"#,
        )
        .unwrap();
        assert_eq!(script.chat[0], ScriptEntry::reply("a"));
        assert_eq!(script.chat[1].matcher, Matcher::Contains("Formalize".into()));
        assert_eq!(script.chat[2].outcome, Outcome::Fail("reset".into()));
        assert_eq!(script.chat[2].matcher, Matcher::Index(3));
        assert_eq!(script.embedding, EmbeddingSpec::Vectors(vec![vec![1.0, 0.0]]));
        let verdicts = script.verifier.unwrap();
        assert_eq!(verdicts[1].status, VerdictStatus::Verified);
        assert_eq!(verdicts[2].diagnostics[0].line, 3);
    }

    #[test]
    fn defaults_and_errors() {
        let script = MockScript::parse("{}").unwrap();
        assert!(script.chat.is_empty());
        assert_eq!(script.embedding, EmbeddingSpec::Hashing(64));
        assert!(script.verifier.is_none());
        assert!(matches!(
            MockScript::parse(r#"{"chat":[{"response":"a","fail":"b"}]}"#),
            Err(MockScriptError::Entry { index: 0, .. })
        ));
        assert!(matches!(
            MockScript::parse(r#"{"chats":[]}"#),
            Err(MockScriptError::Parse { .. })
        ));
    }
}
