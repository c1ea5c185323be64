//! Datasets, Pass@1 and evaluation reports.

mod dataset;
mod minif2f;
mod report;
mod runner;

use thiserror::Error;

use crate::lean_verifier::{Verdict, VerdictStatus};
use crate::pipelines::PipelineError;

pub use dataset::{load_problems, parse_problems};
pub use minif2f::{convert_minif2f, extract_lean_theorems};
pub use report::{
    build_report, format_percent, render_markdown, write_report, EvalReport, ProblemResult, CITED_BASELINES,
    CITED_COLUMNS,
};
pub use runner::{run_evaluation, EvalOptions, RunMeta};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("dataset line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("dataset line {line}: record is missing `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("dataset line {line}: unknown split `{value}`")]
    UnknownSplit { line: usize, value: String },
    #[error("dataset line {line}: duplicate problem name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("dataset line {line}: problem `{name}` has an empty informal statement")]
    EmptyStatement { line: usize, name: String },
    #[error("Pass@1 is undefined for an empty verdict list")]
    NoVerdicts,
    #[error("run directory {0} already holds attempts; pass --resume to continue it")]
    RunExists(String),
    #[error("attempt for `{problem}` failed: {source}")]
    Pipeline {
        problem: String,
        #[source]
        source: PipelineError,
    },
    #[error("persisted attempt for `{0}` is missing")]
    MissingAttempt(String),
}

/// Fraction of verdicts that are verified. Every other status counts as a miss.
pub fn pass_at_1(verdicts: &[Verdict]) -> Result<f64, EvalError> {
    pass_at_1_statuses(verdicts.iter().map(|v| v.status))
}

pub fn pass_at_1_statuses(statuses: impl IntoIterator<Item = VerdictStatus>) -> Result<f64, EvalError> {
    let (total, verified) = statuses.into_iter().fold((0usize, 0usize), |(t, v), s| {
        (t + 1, v + usize::from(s == VerdictStatus::Verified))
    });
    if total == 0 {
        return Err(EvalError::NoVerdicts);
    }
    Ok(verified as f64 / total as f64)
}
