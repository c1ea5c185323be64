//! Proof-generation pipelines: basic RAG, RAG with enhanced query generation
//! (EQG) and iterative proof augmentation (IPA).
//!
//! All three share one iteration routine: query, retrieve, write an informal
//! proof, formalize it, and (when due) verify. EQG is a single iteration with
//! keyword-enhanced retrieval; IPA repeats it `sigma` times, feeding the
//! previous proof and verifier diagnostics forward.

mod run;
mod stages;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_base::{ScoredChunk, DEFAULT_K};
use crate::lean_verifier::Verdict;
use crate::llm_gateway::DecodingParams;

pub use run::{run_attempt, run_basic, run_eqg, run_ipa, PipelineEnv, RETRIEVAL_ID};
pub use stages::{
    augment_prompt, build_basic_query, build_eqg_query, extract_keywords, formalize_proof, generate_informal_proof,
    parse_keywords, render_context, strip_code_fences, KeywordError, NONE_PLACEHOLDER, NO_MATERIAL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "validation" | "valid" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub split: Split,
    pub informal_statement: String,
    pub formal_statement: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Basic,
    Eqg,
    Ipa,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Eqg => "eqg",
            Variant::Ipa => "ipa",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "basic" | "rag" => Some(Variant::Basic),
            "eqg" => Some(Variant::Eqg),
            "ipa" => Some(Variant::Ipa),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decoding parameters for each pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageDecoding {
    pub keywords: DecodingParams,
    pub informal_proof: DecodingParams,
    pub formalization: DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub retrieval_k: usize,
    /// IPA iteration count; ignored by the other variants.
    pub sigma: usize,
    pub include_verifier_feedback: bool,
    /// Stop IPA at the first verified iteration.
    pub early_exit: bool,
    /// Retrieve once per keyword and merge by maximum score.
    pub eqg_multi_query: bool,
    /// When false, retrieval is skipped entirely (control runs).
    pub use_retrieval: bool,
    pub decoding: StageDecoding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ipa,
            retrieval_k: DEFAULT_K,
            sigma: 5,
            include_verifier_feedback: true,
            early_exit: false,
            eqg_multi_query: false,
            use_retrieval: true,
            decoding: StageDecoding::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.retrieval_k == 0 {
            return Err(PipelineError::InvalidConfig("retrieval_k must be at least 1".into()));
        }
        if self.variant == Variant::Ipa && self.sigma == 0 {
            return Err(PipelineError::InvalidConfig("sigma must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Keywords,
    Retrieval,
    InformalProof,
    Formalization,
    Verification,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Keywords => "keywords",
            Stage::Retrieval => "retrieval",
            Stage::InformalProof => "informal_proof",
            Stage::Formalization => "formalization",
            Stage::Verification => "verification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub keywords: Vec<String>,
    /// Keyword extraction failed and the basic query was used instead.
    pub keyword_fallback: bool,
    pub query_text: String,
    pub retrieved: Vec<ScoredChunk>,
    pub informal_proof: String,
    pub lean_proof: String,
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage_failure: Option<StageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofAttempt {
    pub problem: String,
    pub variant: Variant,
    pub sigma: usize,
    pub include_verifier_feedback: bool,
    pub use_retrieval: bool,
    pub iterations: Vec<IterationTrace>,
    pub final_informal_proof: String,
    pub final_lean_proof: String,
    pub final_verdict: Verdict,
    pub llm_call_count: usize,
    pub embedding_call_count: usize,
    pub elapsed_ms: u64,
}

impl ProofAttempt {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attempts serialize")
    }

    /// `runs/<run_id>/<problem>.json` relative to `run_dir`.
    pub fn path_in(run_dir: &Path, problem: &str) -> PathBuf {
        run_dir.join(format!("{}.json", file_stem(problem)))
    }

    pub fn save(&self, run_dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(run_dir)?;
        let path = Self::path_in(run_dir, &self.problem);
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_json() + "\n")?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }
}

/// Problem names with path separators or odd characters become safe file stems.
/// Stems that would collide with `run.json` or `report.json` get a `problem_` prefix.
pub fn file_stem(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if matches!(stem.as_str(), "run" | "report") {
        format!("problem_{stem}")
    } else {
        stem
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("problem `{0}` has an empty informal statement")]
    EmptyStatement(String),
    #[error("no keywords to build a query from")]
    NoKeywords,
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("scripted component exhausted: {0}")]
    Script(String),
    #[error("{0}")]
    Io(String),
}
