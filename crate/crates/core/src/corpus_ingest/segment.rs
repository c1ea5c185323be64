//! Model-proposed segmentation mapped back onto source text.
//!
//! The model answers with a JSON array of `{kind, title, start, end}` where
//! `start`/`end` are verbatim snippets opening and closing each segment.
//! Snippets are located whitespace-insensitively in the normalized document.
//! Segment text is always cut from the source. Boundaries that land inside a
//! top-level environment are widened to its edges, unlocatable proposals are
//! discarded, and whatever stays uncovered goes through the rule-based
//! segmenter.

use std::ops::Range;

use serde::Deserialize;

use super::rules::{atomic_units, plan_region};
use super::{
    latex, normalize_whitespace, pieces_to_chunks, split_oversize, Chunk, ChunkKind, ChunkParams, IngestError,
    LatexDocument, Piece,
};
use crate::llm_gateway::{CallContext, DecodingParams, Gateway, PromptTemplate};

/// One boundary proposal from the model.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Proposal {
    pub kind: String,
    #[serde(default)]
    pub title: Option<String>,
    pub start: String,
    #[serde(default)]
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub chunks: Vec<Chunk>,
    /// Proposals that could not be located in the source.
    pub discarded: usize,
    /// True when the whole document went through the rule-based segmenter
    /// because the model call or its response was unusable.
    pub full_fallback: bool,
}

/// Extracts the proposal array from a model response, tolerating prose or
/// code fences around it.
pub fn parse_proposals(response: &str) -> Option<Vec<Proposal>> {
    let start = response.find('[')?;
    let end = response.rfind(']')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&response[start..=end]).ok()
}

pub fn segment_latex(
    doc: &LatexDocument,
    gateway: &Gateway,
    template: &PromptTemplate,
    decoding: &DecodingParams,
    params: &ChunkParams,
) -> Result<Segmentation, IngestError> {
    doc.validate()?;
    let text = normalize_whitespace(&doc.latex);
    let ctx = CallContext::new(template.id());
    let response = gateway.complete_template(&ctx, template, &[("document", &text)], decoding);
    let proposals = match response.as_deref().ok().and_then(parse_proposals) {
        Some(p) if !p.is_empty() => p,
        _ => {
            match &response {
                Err(err) => tracing::warn!(document = %doc.document_id, %err, "segmentation call failed, using rules"),
                Ok(_) => tracing::warn!(document = %doc.document_id, "unusable segmentation response, using rules"),
            }
            let pieces = plan_region(&text, 0..text.len(), params)?;
            return Ok(Segmentation {
                chunks: pieces_to_chunks(doc, &text, &pieces),
                discarded: 0,
                full_fallback: true,
            });
        }
    };
    let (pieces, discarded) = map_proposals(&text, &proposals, params)?;
    Ok(Segmentation {
        chunks: pieces_to_chunks(doc, &text, &pieces),
        discarded,
        full_fallback: false,
    })
}

/// Whitespace-free view of a text with a byte map back to the original.
struct Compact {
    text: String,
    origin: Vec<usize>,
}

impl Compact {
    fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut origin = Vec::with_capacity(source.len());
        for (at, c) in source.char_indices().filter(|(_, c)| !c.is_whitespace()) {
            text.push(c);
            origin.extend(at..at + c.len_utf8());
        }
        Self { text, origin }
    }

    /// Original byte offset where compact byte `i` starts (or the source end).
    fn start_of(&self, i: usize, source_len: usize) -> usize {
        self.origin.get(i).copied().unwrap_or(source_len)
    }

    /// Original byte offset just past compact byte range ending at `i`.
    fn end_of(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.origin[i - 1] + 1
        }
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

struct Located {
    start: usize,
    end: Option<usize>,
    kind: ChunkKind,
    title: Option<String>,
}

fn locate(compact: &Compact, proposals: &[Proposal]) -> (Vec<Located>, usize) {
    let mut cursor = 0;
    let mut located = Vec::new();
    let mut discarded = 0;
    for proposal in proposals {
        let start_anchor = squash(&proposal.start);
        let found = (!start_anchor.is_empty())
            .then(|| compact.text[cursor..].find(&start_anchor))
            .flatten();
        let Some(rel) = found else {
            discarded += 1;
            continue;
        };
        let s = cursor + rel;
        let e = match proposal.end.as_deref().map(squash).filter(|a| !a.is_empty()) {
            Some(end_anchor) => match compact.text[s..].find(&end_anchor) {
                Some(rel) => Some((s + rel + end_anchor.len()).max(s + start_anchor.len())),
                None => {
                    discarded += 1;
                    continue;
                }
            },
            None => None,
        };
        cursor = e.unwrap_or(s + start_anchor.len());
        located.push(Located {
            start: s,
            end: e,
            kind: ChunkKind::parse(&proposal.kind).unwrap_or(ChunkKind::Theory),
            title: proposal.title.clone().filter(|t| !t.trim().is_empty()),
        });
    }
    (located, discarded)
}

fn widen(units: &[Range<usize>], at: usize, toward_end: bool) -> usize {
    for unit in units {
        if unit.start < at && at < unit.end {
            return if toward_end { unit.end } else { unit.start };
        }
    }
    at
}

fn map_proposals(text: &str, proposals: &[Proposal], params: &ChunkParams) -> Result<(Vec<Piece>, usize), IngestError> {
    let compact = Compact::new(text);
    let (located, discarded) = locate(&compact, proposals);
    let structure = latex::structure(text)?;
    let units = atomic_units(text, &structure);

    let mut spans: Vec<Piece> = Vec::new();
    for (i, item) in located.iter().enumerate() {
        let start = compact.start_of(item.start, text.len());
        let end = match item.end {
            Some(e) => compact.end_of(e),
            None => located
                .get(i + 1)
                .map_or(text.len(), |next| compact.start_of(next.start, text.len())),
        };
        let mut start = widen(&units, start, false);
        let end = widen(&units, end, true);
        if let Some(prev) = spans.last() {
            start = start.max(prev.range.end);
        }
        if start >= end {
            continue;
        }
        spans.push(Piece {
            range: start..end,
            kind: item.kind,
            title: item.title.clone(),
        });
    }

    let mut pieces = Vec::new();
    let mut cursor = 0;
    for span in spans {
        if !text[cursor..span.range.start].trim().is_empty() {
            pieces.extend(plan_region(text, cursor..span.range.start, params)?);
        }
        cursor = span.range.end;
        pieces.push(span);
    }
    if !text[cursor..].trim().is_empty() {
        pieces.extend(plan_region(text, cursor..text.len(), params)?);
    }
    Ok((split_oversize(text, pieces, params.max_chunk_chars), discarded))
}
