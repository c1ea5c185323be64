//! Aggregation of persisted attempts into `report.json` and `report.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pass_at_1_statuses, EvalError, RunMeta};
use crate::lean_verifier::VerdictStatus;
use crate::pipelines::{ProofAttempt, Split, Variant};

/// Column labels of the cited baseline table.
pub const CITED_COLUMNS: [&str; 6] = [
    "GPT-4",
    "RAG-assisted GPT-4",
    "RAG-assisted GPT-4 with EQG",
    "RAG-assisted GPT-4 with IPA",
    "Human-guided GPT-4",
    "GPT-f",
];

/// Published MiniF2F Pass@1 percentages, shown for comparison only.
pub const CITED_BASELINES: [(Split, [f64; 6]); 2] = [
    (Split::Validation, [9.4, 2.3, 25.2, 40.0, 11.5, 23.9]),
    (Split::Test, [9.0, 2.5, 27.6, 32.4, 8.6, 24.6]),
];

const STATUSES: [VerdictStatus; 5] = [
    VerdictStatus::Verified,
    VerdictStatus::Failed,
    VerdictStatus::Incomplete,
    VerdictStatus::Timeout,
    VerdictStatus::EnvironmentError,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub name: String,
    pub status: VerdictStatus,
    pub llm_calls: usize,
    pub iterations: usize,
    pub elapsed_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub variant: Variant,
    pub split: Option<Split>,
    pub sigma: usize,
    pub include_verifier_feedback: bool,
    pub use_retrieval: bool,
    pub total: usize,
    pub verified_count: usize,
    pub pass_at_1: f64,
    pub status_counts: BTreeMap<String, usize>,
    pub per_problem: Vec<ProblemResult>,
    pub chat_model: String,
    pub embedding_model: String,
    pub toolchain: String,
}

/// `0.4` → `"40.0%"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

/// Builds the report from the attempts persisted in `run_dir`, in the order
/// recorded in the run metadata.
pub fn build_report(meta: &RunMeta, run_dir: &Path) -> Result<EvalReport, EvalError> {
    let mut per_problem = Vec::with_capacity(meta.problems.len());
    for name in &meta.problems {
        let path = ProofAttempt::path_in(run_dir, name);
        if !path.exists() {
            return Err(EvalError::MissingAttempt(name.clone()));
        }
        let attempt = ProofAttempt::load(&path).map_err(|source| EvalError::Pipeline {
            problem: name.clone(),
            source,
        })?;
        per_problem.push(ProblemResult {
            name: attempt.problem.clone(),
            status: attempt.final_verdict.status,
            llm_calls: attempt.llm_call_count,
            iterations: attempt.iterations.len(),
            elapsed_ms: attempt.elapsed_ms,
            stage_failure: attempt
                .iterations
                .last()
                .and_then(|it| it.stage_failure.as_ref())
                .map(|f| format!("{}: {}", f.stage.as_str(), f.message)),
        });
    }
    let total = per_problem.len();
    let verified_count = per_problem
        .iter()
        .filter(|p| p.status == VerdictStatus::Verified)
        .count();
    let pass_at_1 = if total == 0 {
        0.0
    } else {
        pass_at_1_statuses(per_problem.iter().map(|p| p.status))?
    };
    let status_counts = STATUSES
        .iter()
        .map(|s| {
            (
                s.as_str().to_string(),
                per_problem.iter().filter(|p| p.status == *s).count(),
            )
        })
        .collect();
    Ok(EvalReport {
        run_id: meta.run_id.clone(),
        variant: meta.variant,
        split: meta.split,
        sigma: meta.sigma,
        include_verifier_feedback: meta.include_verifier_feedback,
        use_retrieval: meta.use_retrieval,
        total,
        verified_count,
        pass_at_1,
        status_counts,
        per_problem,
        chat_model: meta.chat_model.clone(),
        embedding_model: meta.embedding_model.clone(),
        toolchain: meta.toolchain.clone(),
    })
}

fn on_off(flag: bool) -> &'static str {
    if flag {
        "on"
    } else {
        "off"
    }
}

pub fn render_markdown(report: &EvalReport) -> String {
    let mut md = String::new();
    let split = report.split.map_or("all", Split::as_str);
    let variant = match report.variant {
        Variant::Ipa => format!("ipa (sigma={})", report.sigma),
        other => other.as_str().to_string(),
    };
    let _ = writeln!(md, "# Evaluation report `{}`\n", report.run_id);
    md.push_str("| Split | Variant | Verifier feedback | Retrieval | Problems | Verified | Pass@1 |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    let feedback = match report.variant {
        Variant::Ipa => on_off(report.include_verifier_feedback),
        _ => "n/a",
    };
    let _ = writeln!(
        md,
        "| {split} | {variant} | {feedback} | {} | {} | {} | {} |\n",
        on_off(report.use_retrieval),
        report.total,
        report.verified_count,
        format_percent(report.pass_at_1)
    );
    let breakdown: Vec<String> = STATUSES
        .iter()
        .map(|s| {
            format!(
                "{} {}",
                s.as_str(),
                report.status_counts.get(s.as_str()).copied().unwrap_or(0)
            )
        })
        .collect();
    let _ = writeln!(md, "Status breakdown: {}\n", breakdown.join(", "));
    let _ = writeln!(md, "Chat model: `{}`  ", report.chat_model);
    let _ = writeln!(md, "Embedding model: `{}`  ", report.embedding_model);
    let _ = writeln!(md, "Lean toolchain: `{}`\n", report.toolchain);

    md.push_str(
        "## Per problem\n\n| Problem | Status | Iterations | LLM calls | Elapsed (ms) |\n|---|---|---|---|---|\n",
    );
    for p in &report.per_problem {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            p.name, p.status, p.iterations, p.llm_calls, p.elapsed_ms
        );
    }

    md.push_str("\n## Reference results (cited, not reproduced)\n\n");
    md.push_str("Published MiniF2F Pass@1 rates, listed for comparison. They were not produced by this run.\n\n");
    let _ = writeln!(md, "| Split | {} |", CITED_COLUMNS.join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(CITED_COLUMNS.len()));
    for (split, values) in CITED_BASELINES {
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.1}%")).collect();
        let _ = writeln!(md, "| {} (cited) | {} |", split, cells.join(" | "));
    }
    md
}

/// Writes `report.json` and `report.md` into `run_dir`.
pub fn write_report(report: &EvalReport, run_dir: &Path) -> Result<(), EvalError> {
    let io = |path: &Path, e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let json_path = run_dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    std::fs::write(&json_path, json).map_err(|e| io(&json_path, e))?;
    let md_path = run_dir.join("report.md");
    std::fs::write(&md_path, render_markdown(report)).map_err(|e| io(&md_path, e))?;
    Ok(())
}
