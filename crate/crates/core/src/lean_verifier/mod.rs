//! Proof checking against a Lean toolchain or a scripted mock.
//!
//! Whatever the backend reports, [`verify`] applies the soundness gate: a
//! verified verdict requires a source free of `sorry`/`admit` and no error
//! diagnostics.

mod incomplete;
mod lean;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use incomplete::detect_incomplete;
pub use lean::{parse_diagnostics, LeanChecker, LeanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Verified,
    Failed,
    Incomplete,
    Timeout,
    EnvironmentError,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Verified => "verified",
            VerdictStatus::Failed => "failed",
            VerdictStatus::Incomplete => "incomplete",
            VerdictStatus::Timeout => "timeout",
            VerdictStatus::EnvironmentError => "environment_error",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "verified" => Some(VerdictStatus::Verified),
            "failed" => Some(VerdictStatus::Failed),
            "incomplete" => Some(VerdictStatus::Incomplete),
            "timeout" => Some(VerdictStatus::Timeout),
            "environment_error" => Some(VerdictStatus::EnvironmentError),
            _ => None,
        }
    }
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    #[default]
    Error,
    Warning,
    Information,
}

impl Severity {
    fn parse(label: &str) -> Self {
        match label.to_ascii_lowercase().as_str() {
            "warning" => Severity::Warning,
            "information" | "info" => Severity::Information,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u32,
    pub column: u32,
    #[serde(default)]
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: u32, column: u32, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            severity: Severity::Error,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub elapsed_ms: u64,
}

impl Verdict {
    pub fn new(status: VerdictStatus, diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            status,
            diagnostics,
            elapsed_ms: 0,
        }
    }

    pub fn is_verified(&self) -> bool {
        self.status == VerdictStatus::Verified
    }

    /// Diagnostics rendered one per line for feedback prompts.
    pub fn feedback_text(&self) -> String {
        if self.diagnostics.is_empty() {
            return format!("status: {}", self.status);
        }
        self.diagnostics
            .iter()
            .map(|d| format!("line {}, column {}: {}", d.line, d.column, d.message))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifierError {
    #[error("verifier script exhausted at call {call}")]
    ScriptExhausted { call: usize },
}

/// Identifies one check for temp-file naming and logs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckJob {
    pub run_id: String,
    pub problem: String,
    pub iteration: usize,
}

pub trait ProofChecker: Send + Sync {
    /// Raw backend verdict, before the soundness gate.
    fn check(&self, source: &str, job: &CheckJob) -> Result<Verdict, VerifierError>;

    /// Toolchain description recorded in reports.
    fn version(&self) -> String;
}

/// Checks `source` and applies the soundness gate.
pub fn verify(checker: &dyn ProofChecker, source: &str, job: &CheckJob) -> Result<Verdict, VerifierError> {
    let raw = checker.check(source, job)?;
    Ok(gate(source, raw))
}

fn gate(source: &str, mut verdict: Verdict) -> Verdict {
    if verdict.status != VerdictStatus::Verified {
        return verdict;
    }
    if detect_incomplete(source) {
        verdict.status = VerdictStatus::Incomplete;
        verdict
            .diagnostics
            .push(Diagnostic::error(0, 0, "proof contains `sorry` or `admit`"));
    } else if verdict.diagnostics.iter().any(|d| d.severity == Severity::Error) {
        verdict.status = VerdictStatus::Failed;
    } else {
        verdict.diagnostics.clear();
    }
    verdict
}

/// Returns scripted verdicts strictly in order.
#[derive(Debug)]
pub struct ScriptedVerifier {
    verdicts: Vec<Verdict>,
    next: AtomicUsize,
}

impl ScriptedVerifier {
    pub fn new(verdicts: Vec<Verdict>) -> Self {
        Self {
            verdicts,
            next: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl ProofChecker for ScriptedVerifier {
    fn check(&self, _source: &str, _job: &CheckJob) -> Result<Verdict, VerifierError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.verdicts
            .get(i)
            .cloned()
            .ok_or(VerifierError::ScriptExhausted { call: i + 1 })
    }

    fn version(&self) -> String {
        "scripted-verifier".into()
    }
}
