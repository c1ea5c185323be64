//! Corpus ingestion: page images or LaTeX in, validated chunks out.
//!
//! Two segmenters are provided. [`segment_latex`] asks a chat model for
//! segment boundaries and maps them back onto the source text, so the model
//! can never alter the mathematics. [`segment_rule_based`] is deterministic and
//! serves as the fallback for anything the model gets wrong.

mod latex;
mod pages;
mod rules;
mod segment;
mod transcribe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_gateway::GatewayError;

pub use latex::validate;
pub use pages::{load_page_images, rasterize_pdf, PageImage};
pub use rules::segment_rule_based;
pub use segment::{parse_proposals, segment_latex, Proposal, Segmentation};
pub use transcribe::{transcribe_pages, Transcription, EMPTY_PAGE_MARKER};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unbalanced environment `{environment}` opened on line {line}: {detail}")]
    Unbalanced {
        environment: String,
        line: usize,
        detail: String,
    },
    #[error("transcription of page {page_number} failed (retryable: {retryable}): {source}")]
    Transcription {
        page_number: u32,
        retryable: bool,
        #[source]
        source: GatewayError,
    },
    #[error("invalid page input: {0}")]
    InvalidPages(String),
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("rasterizer failed: {0}")]
    Rasterizer(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Transcribed,
    Native,
}

/// Byte span of one transcribed page inside [`LatexDocument::latex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpan {
    pub page_number: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatexDocument {
    pub document_id: String,
    pub latex: String,
    pub origin: Origin,
    /// Page spans for transcribed documents; empty for native LaTeX.
    #[serde(default)]
    pub pages: Vec<PageSpan>,
}

impl LatexDocument {
    pub fn native(document_id: impl Into<String>, latex: impl Into<String>) -> Self {
        Self {
            document_id: document_id.into(),
            latex: latex.into(),
            origin: Origin::Native,
            pages: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.latex.trim().is_empty() {
            return Err(IngestError::EmptyDocument(self.document_id.clone()));
        }
        validate(&self.latex)
    }

    /// Inclusive page range covering normalized byte range `start..end`.
    fn page_range(&self, start: usize, end: usize) -> Option<PageRange> {
        let hit: Vec<u32> = self
            .pages
            .iter()
            .filter(|p| p.start < end.max(start + 1) && start < p.end.max(p.start + 1))
            .map(|p| p.page_number)
            .collect();
        Some(PageRange {
            first: *hit.first()?,
            last: *hit.last()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    ProblemSolution,
    Theory,
    WorkedExample,
}

impl ChunkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChunkKind::ProblemSolution => "problem_solution",
            ChunkKind::Theory => "theory",
            ChunkKind::WorkedExample => "worked_example",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "problem_solution" | "problem" => Some(ChunkKind::ProblemSolution),
            "theory" => Some(ChunkKind::Theory),
            "worked_example" | "example" => Some(ChunkKind::WorkedExample),
            _ => None,
        }
    }
}

impl std::fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRange {
    pub first: u32,
    pub last: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSource {
    pub document_id: String,
    pub pages: Option<PageRange>,
}

/// One self-contained unit of corpus text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source: ChunkSource,
    pub kind: ChunkKind,
    pub latex: String,
    pub title: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub min_chunk_chars: usize,
    pub max_chunk_chars: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            min_chunk_chars: 200,
            max_chunk_chars: 4000,
        }
    }
}

/// Collapses runs of spaces and tabs to one space and converts CRLF/CR to LF.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_run = false;
    while let Some(c) = chars.next() {
        match c {
            ' ' | '\t' => {
                if !in_run {
                    out.push(' ');
                    in_run = true;
                }
            }
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                out.push('\n');
                in_run = false;
            }
            _ => {
                out.push(c);
                in_run = false;
            }
        }
    }
    out
}

/// A planned chunk: a byte range of the normalized text plus its labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Piece {
    pub range: std::ops::Range<usize>,
    pub kind: ChunkKind,
    pub title: Option<String>,
}

fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Splits pieces whose trimmed text exceeds `max_chars` at the latest
/// paragraph break that fits, preferring breaks outside environments.
pub(crate) fn split_oversize(text: &str, pieces: Vec<Piece>, max_chars: usize) -> Vec<Piece> {
    let max_chars = max_chars.max(1);
    let mut out = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let mut start = piece.range.start;
        let end = piece.range.end;
        loop {
            let slice = &text[start..end];
            let lead = slice.len() - slice.trim_start().len();
            let body_start = start + lead;
            if char_len(text[body_start..end].trim_end()) <= max_chars {
                out.push(Piece {
                    range: start..end,
                    ..piece.clone()
                });
                break;
            }
            let cut = choose_cut(text, body_start, end, max_chars);
            out.push(Piece {
                range: start..cut,
                ..piece.clone()
            });
            start = cut;
        }
    }
    out
}

fn choose_cut(text: &str, start: usize, end: usize, max_chars: usize) -> usize {
    let slice = &text[start..end];
    let limit = slice
        .char_indices()
        .nth(max_chars)
        .map(|(i, _)| i)
        .unwrap_or(slice.len());
    let window = &slice[..limit];
    let profile = latex::depth_profile(slice);

    let paragraph_breaks: Vec<usize> = window
        .match_indices('\n')
        .filter_map(|(i, _)| {
            let rest = &window[i + 1..];
            let skip = rest.len() - rest.trim_start_matches(' ').len();
            rest[skip..].starts_with('\n').then_some(i + 1 + skip + 1)
        })
        .filter(|&i| i > 0 && i < slice.len())
        .collect();

    let pick = |candidates: &[usize]| candidates.iter().rev().copied().find(|&i| i > 0);
    let top_level: Vec<usize> = paragraph_breaks
        .iter()
        .copied()
        .filter(|&i| latex::depth_at(&profile, i) == 0)
        .collect();
    let lines: Vec<usize> = window
        .match_indices('\n')
        .map(|(i, _)| i + 1)
        .filter(|&i| i < slice.len())
        .collect();
    let spaces: Vec<usize> = window
        .match_indices(' ')
        .map(|(i, _)| i + 1)
        .filter(|&i| i < slice.len())
        .collect();
    let cut = pick(&top_level)
        .or_else(|| pick(&paragraph_breaks))
        .or_else(|| pick(&lines))
        .or_else(|| pick(&spaces))
        .unwrap_or(limit.max(slice.chars().next().map_or(1, char::len_utf8)));
    start + cut
}

/// Turns pieces into chunks with stable ids `<document_id>:<index>`.
pub(crate) fn pieces_to_chunks(doc: &LatexDocument, text: &str, pieces: &[Piece]) -> Vec<Chunk> {
    let use_pages = !doc.pages.is_empty() && text == doc.latex;
    pieces
        .iter()
        .filter(|p| !text[p.range.clone()].trim().is_empty())
        .enumerate()
        .map(|(i, piece)| {
            let raw = &text[piece.range.clone()];
            let lead = raw.len() - raw.trim_start().len();
            let body = raw.trim();
            let start = piece.range.start + lead;
            Chunk {
                chunk_id: format!("{}:{:04}", doc.document_id, i),
                source: ChunkSource {
                    document_id: doc.document_id.clone(),
                    pages: if use_pages {
                        doc.page_range(start, start + body.len())
                    } else {
                        None
                    },
                },
                kind: piece.kind,
                latex: body.to_string(),
                title: piece.title.clone(),
            }
        })
        .collect()
}
