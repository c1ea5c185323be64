//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use lemmahead::corpus_ingest::segment_rule_based;
use lemmahead::knowledge_base::{Embedder, HashingEmbedder};
use lemmahead::lean_verifier::ScriptedVerifier;
use lemmahead::llm_gateway::{RetryPolicy, ScriptEntry, ScriptedMock, Transcript};
use lemmahead::pipelines::PipelineEnv;
use lemmahead::{
    ChunkParams, Clock, Gateway, KnowledgeBase, LatexDocument, PipelineConfig, Problem, PromptSet, Split, Variant,
    Verdict, VerdictStatus,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn embedder() -> Embedder {
    Embedder::new(Box::new(HashingEmbedder::new(64)), 8000)
}

/// The three-section fixture corpus, segmented by rules and embedded by hashing.
pub fn corpus_store() -> KnowledgeBase {
    let text = std::fs::read_to_string(fixture("corpus/three_sections.tex")).unwrap();
    let doc = LatexDocument::native("three_sections", text);
    let chunks = segment_rule_based(&doc, &ChunkParams::default()).unwrap();
    let mut kb = KnowledgeBase::new();
    kb.add_chunks(chunks, &embedder(), 32).unwrap();
    kb
}

pub fn problem(name: &str) -> Problem {
    Problem {
        name: name.into(),
        split: Split::Validation,
        informal_statement: "Evaluate $-a - b^2 + 3ab$ when $a = -1$ and $b = 5$.".into(),
        formal_statement: format!(
            "theorem {name} (a b : ℝ) (h₀ : a = -1) (h₁ : b = 5) :\n  -a - b^2 + 3 * (a * b) = -39 :="
        ),
    }
}

pub fn config(variant: Variant, sigma: usize) -> PipelineConfig {
    PipelineConfig {
        variant,
        sigma,
        ..PipelineConfig::default()
    }
}

pub fn failed(message: &str) -> Verdict {
    Verdict::new(
        VerdictStatus::Failed,
        vec![lemmahead::lean_verifier::Diagnostic::error(3, 2, message)],
    )
}

pub fn verified() -> Verdict {
    Verdict::new(VerdictStatus::Verified, Vec::new())
}

/// Replies for `iterations` keyword/proof/formalization rounds.
pub fn ipa_replies(iterations: usize) -> Vec<ScriptEntry> {
    (1..=iterations)
        .flat_map(|i| {
            [
                ScriptEntry::reply(format!("substitution {i}\nsquare of a number {i}")),
                ScriptEntry::reply(format!("Informal proof {i}: substitute and simplify.")),
                ScriptEntry::reply(format!(
                    "```lean\ntheorem p{i} : (1:ℕ) + 1 = 2 :=\nbegin\n  norm_num,\nend\n```"
                )),
            ]
        })
        .collect()
}

/// A gateway over scripted chat replies plus the other pipeline components.
pub struct Rig {
    pub gateway: Gateway,
    pub prompts: PromptSet,
    pub store: KnowledgeBase,
    pub embedder: Embedder,
    pub verifier: ScriptedVerifier,
}

impl Rig {
    pub fn new(chat: Vec<ScriptEntry>, verdicts: Vec<Verdict>, store: KnowledgeBase) -> Self {
        let gateway = Gateway::new(Arc::new(ScriptedMock::new(chat)))
            .with_retry(RetryPolicy::immediate(2))
            .with_transcript(Transcript::new())
            .with_clock(Clock::Frozen);
        Self {
            gateway,
            prompts: PromptSet::builtin(),
            store,
            embedder: embedder(),
            verifier: ScriptedVerifier::new(verdicts),
        }
    }

    pub fn env(&self) -> PipelineEnv<'_> {
        PipelineEnv {
            gateway: &self.gateway,
            prompts: &self.prompts,
            store: &self.store,
            embedder: &self.embedder,
            verifier: &self.verifier,
            run_id: "test",
        }
    }

    pub fn transcript(&self) -> &Transcript {
        self.gateway.transcript()
    }

    /// Rendered chat requests in call order.
    pub fn chat_requests(&self) -> Vec<serde_json::Value> {
        self.transcript()
            .entries()
            .into_iter()
            .filter(|e| e.kind == lemmahead::llm_gateway::EntryKind::Chat)
            .map(|e| e.request)
            .collect()
    }
}
