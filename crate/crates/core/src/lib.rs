//! LemmaHead: a retrieval-augmented proof-generation toolkit.
//!
//! Mathematical corpora (page images or LaTeX) are segmented into self-contained
//! chunks, embedded into a persistent vector store, and retrieved as context for
//! chat-model proof generation. Generated Lean proofs are checked by a Lean
//! toolchain (or a scripted mock) and aggregated into Pass@1 reports.
//!
//! Modules:
//! - [`corpus_ingest`]: transcription and segmentation of source documents
//! - [`knowledge_base`]: embeddings, the `.lhkb` store and exact top-k retrieval
//! - [`llm_gateway`]: chat clients, prompt templates, retries and transcripts
//! - [`pipelines`]: the basic, EQG and IPA proof pipelines
//! - [`lean_verifier`]: proof checking and the incompleteness gate
//! - [`evaluation`]: datasets, Pass@1 and report rendering

pub mod clock;
pub mod config;
pub mod corpus_ingest;
pub mod evaluation;
pub mod knowledge_base;
pub mod lean_verifier;
pub mod llm_gateway;
pub mod mock_script;
pub mod pipelines;

pub use clock::Clock;
pub use corpus_ingest::{Chunk, ChunkKind, ChunkParams, LatexDocument};
pub use knowledge_base::{EmbeddingVector, KnowledgeBase, ScoredChunk, StoreRecord};
pub use lean_verifier::{Verdict, VerdictStatus};
pub use llm_gateway::{Gateway, PromptSet, PromptTemplate};
pub use pipelines::{PipelineConfig, Problem, ProofAttempt, Split, Variant};
