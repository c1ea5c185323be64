//! Pipeline runners built on one shared iteration routine.

use std::collections::HashMap;

use serde_json::json;

use super::stages::{
    augment_prompt, build_basic_query, build_eqg_query, extract_keywords, formalize_proof, generate_informal_proof,
    KeywordError,
};
use super::{IterationTrace, PipelineConfig, PipelineError, Problem, ProofAttempt, Stage, StageFailure, Variant};
use crate::knowledge_base::{rank_order, Embedder, KnowledgeBase, ScoredChunk};
use crate::lean_verifier::{verify, CheckJob, Diagnostic, ProofChecker, Verdict, VerdictStatus, VerifierError};
use crate::llm_gateway::{
    CallContext, EntryKind, Gateway, GatewayError, PromptSet, TranscriptEntry, TransportError, FORMALIZATION_ID,
    INFORMAL_PROOF_ID, KEYWORDS_ID,
};

/// Template id recorded for retrieval transcript entries.
pub const RETRIEVAL_ID: &str = "retrieval";

/// Shared components for running attempts. The store is read-only.
#[derive(Clone, Copy)]
pub struct PipelineEnv<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub store: &'a KnowledgeBase,
    pub embedder: &'a Embedder,
    pub verifier: &'a dyn ProofChecker,
    pub run_id: &'a str,
}

pub fn run_basic(
    problem: &Problem,
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
) -> Result<ProofAttempt, PipelineError> {
    run_variant(problem, config, env, Variant::Basic)
}

pub fn run_eqg(
    problem: &Problem,
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
) -> Result<ProofAttempt, PipelineError> {
    run_variant(problem, config, env, Variant::Eqg)
}

pub fn run_ipa(
    problem: &Problem,
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
) -> Result<ProofAttempt, PipelineError> {
    run_variant(problem, config, env, Variant::Ipa)
}

/// Runs the variant named in `config`.
pub fn run_attempt(
    problem: &Problem,
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
) -> Result<ProofAttempt, PipelineError> {
    run_variant(problem, config, env, config.variant)
}

#[derive(Default)]
struct Counters {
    llm_calls: usize,
    embedding_calls: usize,
}

#[derive(Default)]
struct Carry {
    previous_proof: Option<String>,
    feedback: Option<String>,
}

fn script_error(err: &GatewayError) -> Option<PipelineError> {
    match err {
        GatewayError::ScriptExhausted { call } => {
            Some(PipelineError::Script(format!("chat script exhausted at call {call}")))
        }
        GatewayError::Rejected(TransportError::NoMatch { call }) => Some(PipelineError::Script(format!(
            "no chat script entry matches call {call}"
        ))),
        _ => None,
    }
}

fn failed(stage: Stage, message: String) -> (Verdict, StageFailure) {
    let verdict = Verdict::new(
        VerdictStatus::Failed,
        vec![Diagnostic::error(
            0,
            0,
            format!("{} stage failed: {message}", stage.as_str()),
        )],
    );
    (verdict, StageFailure { stage, message })
}

fn run_variant(
    problem: &Problem,
    config: &PipelineConfig,
    env: &PipelineEnv<'_>,
    variant: Variant,
) -> Result<ProofAttempt, PipelineError> {
    config.validate()?;
    build_basic_query(problem)?;
    let watch = env.gateway.clock().start();
    let sigma = if variant == Variant::Ipa { config.sigma } else { 1 };
    let mut counters = Counters::default();
    let mut carry = Carry::default();
    let mut iterations = Vec::with_capacity(sigma);
    for i in 1..=sigma {
        let verify_now = i == sigma || (variant == Variant::Ipa && config.include_verifier_feedback);
        let trace = iterate(env, problem, config, variant, i, verify_now, &mut carry, &mut counters)?;
        let done = config.early_exit && trace.verdict.as_ref().is_some_and(Verdict::is_verified);
        iterations.push(trace);
        if done && variant == Variant::Ipa {
            break;
        }
    }
    let last = iterations.last().expect("at least one iteration");
    let final_verdict = last
        .verdict
        .clone()
        .expect("the final iteration is always verified or failed");
    Ok(ProofAttempt {
        problem: problem.name.clone(),
        variant,
        sigma,
        include_verifier_feedback: config.include_verifier_feedback,
        use_retrieval: config.use_retrieval,
        final_informal_proof: last.informal_proof.clone(),
        final_lean_proof: last.lean_proof.clone(),
        final_verdict,
        iterations,
        llm_call_count: counters.llm_calls,
        embedding_call_count: counters.embedding_calls,
        elapsed_ms: watch.elapsed_ms(),
    })
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    env: &PipelineEnv<'_>,
    problem: &Problem,
    config: &PipelineConfig,
    variant: Variant,
    iteration: usize,
    verify_now: bool,
    carry: &mut Carry,
    counters: &mut Counters,
) -> Result<IterationTrace, PipelineError> {
    let ctx = |id: &str| CallContext::for_problem(id, &problem.name, iteration);
    let mut trace = IterationTrace {
        iteration,
        keywords: Vec::new(),
        keyword_fallback: false,
        query_text: String::new(),
        retrieved: Vec::new(),
        informal_proof: String::new(),
        lean_proof: String::new(),
        verdict: None,
        stage_failure: None,
    };

    // Query.
    if variant == Variant::Basic {
        trace.query_text = build_basic_query(problem)?;
    } else {
        let prior = if iteration >= 2 {
            carry.previous_proof.as_deref()
        } else {
            None
        };
        counters.llm_calls += 1;
        match extract_keywords(
            env.gateway,
            &env.prompts.keywords,
            &ctx(KEYWORDS_ID),
            problem,
            prior,
            &config.decoding.keywords,
        ) {
            Ok(keywords) => {
                trace.query_text = build_eqg_query(&keywords, problem)?;
                trace.keywords = keywords;
            }
            Err(err) => {
                if let KeywordError::Gateway(g) = &err {
                    if let Some(script) = script_error(g) {
                        return Err(script);
                    }
                }
                tracing::warn!(problem = %problem.name, iteration, %err, "keyword extraction failed, using the basic query");
                trace.keyword_fallback = true;
                trace.query_text = build_basic_query(problem)?;
            }
        }
    }

    // Retrieval.
    if config.use_retrieval {
        let multi = config.eqg_multi_query && !trace.keywords.is_empty();
        let queries: Vec<String> = if multi {
            trace.keywords.clone()
        } else {
            vec![trace.query_text.clone()]
        };
        match retrieve(env, problem, iteration, config.retrieval_k, &queries, counters) {
            Ok(retrieved) => trace.retrieved = retrieved,
            Err(message) => return Ok(stop(trace, Stage::Retrieval, message)),
        }
    }

    // Informal proof.
    let messages = augment_prompt(
        &env.prompts.informal_proof,
        problem,
        &trace.retrieved,
        carry.previous_proof.as_deref(),
        carry.feedback.as_deref(),
    )
    .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    counters.llm_calls += 1;
    match generate_informal_proof(
        env.gateway,
        &ctx(INFORMAL_PROOF_ID),
        &messages,
        &config.decoding.informal_proof,
    ) {
        Ok(proof) => {
            carry.previous_proof = Some(proof.clone());
            trace.informal_proof = proof;
        }
        Err(err) => {
            if let Some(script) = script_error(&err) {
                return Err(script);
            }
            return Ok(stop(trace, Stage::InformalProof, err.to_string()));
        }
    }

    // Formalization.
    counters.llm_calls += 1;
    match formalize_proof(
        env.gateway,
        &env.prompts.formalization,
        &ctx(FORMALIZATION_ID),
        problem,
        &trace.informal_proof,
        &config.decoding.formalization,
    ) {
        Ok(lean) => trace.lean_proof = lean,
        Err(err) => {
            if let Some(script) = script_error(&err) {
                return Err(script);
            }
            return Ok(stop(trace, Stage::Formalization, err.to_string()));
        }
    }

    // Verification.
    if verify_now {
        let job = CheckJob {
            run_id: env.run_id.to_string(),
            problem: problem.name.clone(),
            iteration,
        };
        let verdict = verify(env.verifier, &trace.lean_proof, &job).map_err(|e| match e {
            VerifierError::ScriptExhausted { .. } => PipelineError::Script(e.to_string()),
        })?;
        carry.feedback = (!verdict.is_verified()).then(|| verdict.feedback_text());
        tracing::info!(problem = %problem.name, iteration, status = %verdict.status, "verified attempt");
        trace.verdict = Some(verdict);
    }
    Ok(trace)
}

/// Records a stage failure; the attempt continues with the next iteration, if any.
fn stop(mut trace: IterationTrace, stage: Stage, message: String) -> IterationTrace {
    tracing::warn!(iteration = trace.iteration, stage = stage.as_str(), %message, "stage failed");
    let (verdict, failure) = failed(stage, message);
    trace.verdict = Some(verdict);
    trace.stage_failure = Some(failure);
    trace
}

fn retrieve(
    env: &PipelineEnv<'_>,
    problem: &Problem,
    iteration: usize,
    k: usize,
    queries: &[String],
    counters: &mut Counters,
) -> Result<Vec<ScoredChunk>, String> {
    let watch = env.gateway.clock().start();
    let result = if env.store.is_empty() {
        Ok(Vec::new())
    } else {
        let mut merged: HashMap<String, ScoredChunk> = HashMap::new();
        let mut outcome = Ok(());
        for query in queries {
            counters.embedding_calls += 1;
            let hits = env
                .embedder
                .embed_text(query)
                .map_err(|e| e.to_string())
                .and_then(|v| env.store.top_k(&v, k).map_err(|e| e.to_string()));
            match hits {
                Ok(hits) => {
                    for hit in hits {
                        let entry = merged.entry(hit.chunk.chunk_id.clone()).or_insert_with(|| hit.clone());
                        if hit.score > entry.score {
                            entry.score = hit.score;
                        }
                    }
                }
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        outcome.map(|()| {
            let mut all: Vec<ScoredChunk> = merged.into_values().collect();
            all.sort_by(|a, b| rank_order(a.score, &a.chunk.chunk_id, b.score, &b.chunk.chunk_id));
            all.truncate(k);
            all
        })
    };
    let response = match &result {
        Ok(hits) => json!(hits
            .iter()
            .map(|h| json!({"chunk_id": h.chunk.chunk_id, "score": h.score}))
            .collect::<Vec<_>>()),
        Err(_) => serde_json::Value::Null,
    };
    let error = match &result {
        Err(e) => Some(e.clone()),
        Ok(_) if env.store.is_empty() => Some("knowledge base is empty; no reference material".into()),
        Ok(_) => None,
    };
    env.gateway.transcript().push(TranscriptEntry {
        seq: 0,
        kind: EntryKind::Retrieval,
        template_id: RETRIEVAL_ID.into(),
        problem: Some(problem.name.clone()),
        iteration: Some(iteration),
        request: json!({ "queries": queries, "k": k }),
        response,
        error,
        attempts: 1,
        latency_ms: watch.elapsed_ms(),
        tokens: None,
    });
    result
}
