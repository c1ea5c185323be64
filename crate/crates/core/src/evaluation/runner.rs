//! Resumable batch evaluation over a bounded worker pool.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{build_report, write_report, EvalError, EvalReport};
use crate::pipelines::{run_attempt, PipelineConfig, PipelineEnv, Problem, ProofAttempt, Split, Variant};

/// Contents of `run.json`: everything needed to rebuild the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub variant: Variant,
    pub split: Option<Split>,
    pub sigma: usize,
    pub retrieval_k: usize,
    pub include_verifier_feedback: bool,
    pub use_retrieval: bool,
    pub problems: Vec<String>,
    pub chat_model: String,
    pub embedding_model: String,
    pub toolchain: String,
}

impl RunMeta {
    pub fn load(run_dir: &Path) -> Result<Self, EvalError> {
        let path = run_dir.join("run.json");
        let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    fn save(&self, run_dir: &Path) -> Result<(), EvalError> {
        let path = run_dir.join("run.json");
        let text = serde_json::to_string_pretty(self).expect("run metadata serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub parallelism: usize,
    pub resume: bool,
    pub split: Option<Split>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            resume: false,
            split: None,
        }
    }
}

/// Attempts every problem once, persisting each attempt under `run_dir`,
/// then writes `report.json` and `report.md`.
///
/// With `resume`, problems that already have a persisted attempt are skipped.
/// With more than one worker, scripted mocks see calls in a nondeterministic
/// order, so scripted runs should use `parallelism = 1`.
pub fn run_evaluation(
    problems: &[Problem],
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
    run_dir: &Path,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    config.validate().map_err(|source| EvalError::Pipeline {
        problem: String::new(),
        source,
    })?;
    let io = |e: std::io::Error| EvalError::Io {
        path: run_dir.display().to_string(),
        detail: e.to_string(),
    };
    std::fs::create_dir_all(run_dir).map_err(io)?;
    let done: Vec<bool> = problems
        .iter()
        .map(|p| ProofAttempt::path_in(run_dir, &p.name).exists())
        .collect();
    if !options.resume && done.iter().any(|d| *d) {
        return Err(EvalError::RunExists(run_dir.display().to_string()));
    }
    let meta = RunMeta {
        run_id: env.run_id.to_string(),
        variant: config.variant,
        split: options.split,
        sigma: if config.variant == Variant::Ipa {
            config.sigma
        } else {
            1
        },
        retrieval_k: config.retrieval_k,
        include_verifier_feedback: config.include_verifier_feedback,
        use_retrieval: config.use_retrieval,
        problems: problems.iter().map(|p| p.name.clone()).collect(),
        chat_model: env.gateway.model_name(),
        embedding_model: env.embedder.model_name(),
        toolchain: env.verifier.version(),
    };
    meta.save(run_dir)?;

    let pending: Vec<&Problem> = problems
        .iter()
        .zip(&done)
        .filter_map(|(p, d)| {
            if *d {
                tracing::info!(problem = %p.name, "already attempted, skipping");
                None
            } else {
                Some(p)
            }
        })
        .collect();

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let first_error: Mutex<Option<EvalError>> = Mutex::new(None);
    let workers = options.parallelism.clamp(1, pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(problem) = pending.get(i) else { break };
                let outcome = run_attempt(problem, config, env)
                    .map_err(|source| EvalError::Pipeline {
                        problem: problem.name.clone(),
                        source,
                    })
                    .and_then(|attempt| {
                        tracing::info!(problem = %problem.name, status = %attempt.final_verdict.status, "attempt finished");
                        attempt.save(run_dir).map(|_| ()).map_err(io)
                    });
                if let Err(err) = outcome {
                    abort.store(true, Ordering::SeqCst);
                    first_error.lock().expect("error slot").get_or_insert(err);
                    break;
                }
            });
        }
    });
    if let Some(err) = first_error.into_inner().expect("error slot") {
        return Err(err);
    }

    let report = build_report(&meta, run_dir)?;
    write_report(&report, run_dir)?;
    Ok(report)
}
