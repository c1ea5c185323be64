//! Deterministic segmentation at structural markers.
//!
//! Priority: `\section`/`\subsection` boundaries first, then top-level
//! `theorem`, `lemma`, `proposition`, `example` and `problem` blocks, each
//! absorbing the `proof`/`solution` environments that immediately follow it.
//! Text between markers becomes theory chunks. Short chunks are merged into
//! their predecessor; oversize chunks are split at paragraph breaks.

use std::ops::Range;

use super::latex::{self, Block, Structure};
use super::{
    normalize_whitespace, pieces_to_chunks, split_oversize, Chunk, ChunkKind, ChunkParams, IngestError, LatexDocument,
    Piece,
};

const SEGMENT_ENVS: [&str; 5] = ["theorem", "lemma", "proposition", "example", "problem"];
const FOLLOWER_ENVS: [&str; 2] = ["proof", "solution"];

fn kind_for(env: &str) -> ChunkKind {
    match env {
        "problem" => ChunkKind::ProblemSolution,
        "example" => ChunkKind::WorkedExample,
        _ => ChunkKind::Theory,
    }
}

pub fn segment_rule_based(doc: &LatexDocument, params: &ChunkParams) -> Result<Vec<Chunk>, IngestError> {
    doc.validate()?;
    let text = normalize_whitespace(&doc.latex);
    let pieces = plan_region(&text, 0..text.len(), params)?;
    Ok(pieces_to_chunks(doc, &text, &pieces))
}

/// Plans rule-based pieces for `region` of `text` (offsets stay absolute).
/// The region must be environment-balanced.
pub(crate) fn plan_region(text: &str, region: Range<usize>, params: &ChunkParams) -> Result<Vec<Piece>, IngestError> {
    let slice = &text[region.clone()];
    let mut structure = latex::structure(slice)?;
    shift(&mut structure, region.start);
    let raw = plan_pieces(text, region, &structure);
    let merged = merge_short(text, raw, params.min_chunk_chars);
    Ok(split_oversize(text, merged, params.max_chunk_chars))
}

fn shift(structure: &mut Structure, by: usize) {
    for block in &mut structure.blocks {
        block.range = block.range.start + by..block.range.end + by;
    }
    for heading in &mut structure.headings {
        heading.span = heading.span.start + by..heading.span.end + by;
    }
}

/// Top-level units: segment blocks with their attached proofs/solutions.
pub(crate) fn units(text: &str, blocks: &[Block]) -> Vec<(Range<usize>, &'static str, Option<String>)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < blocks.len() {
        let block = &blocks[i];
        let Some(&env) = SEGMENT_ENVS.iter().find(|e| **e == block.name) else {
            i += 1;
            continue;
        };
        let mut end = block.range.end;
        let mut j = i + 1;
        while let Some(next) = blocks.get(j) {
            let gap = &text[end..next.range.start];
            if FOLLOWER_ENVS.contains(&next.name.as_str()) && gap.trim().is_empty() {
                end = next.range.end;
                j += 1;
            } else {
                break;
            }
        }
        out.push((block.range.start..end, env, block.optarg.clone()));
        i = j;
    }
    out
}

/// Every top-level environment extent, with following proofs/solutions
/// attached. Boundaries must never fall strictly inside one of these.
pub(crate) fn atomic_units(text: &str, structure: &Structure) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    for block in &structure.blocks {
        if let Some(last) = out.last_mut() {
            let gap = &text[last.end..block.range.start];
            if FOLLOWER_ENVS.contains(&block.name.as_str()) && gap.trim().is_empty() {
                last.end = block.range.end;
                continue;
            }
        }
        out.push(block.range.clone());
    }
    out
}

fn plan_pieces(text: &str, region: Range<usize>, structure: &Structure) -> Vec<Piece> {
    // Sections: (start, heading end, title).
    let mut sections: Vec<(usize, usize, Option<String>)> = Vec::new();
    let first_heading = structure.headings.first().map(|h| h.span.start);
    if first_heading != Some(region.start) {
        sections.push((region.start, region.start, None));
    }
    for heading in &structure.headings {
        sections.push((heading.span.start, heading.span.end, Some(heading.title.clone())));
    }

    let units = units(text, &structure.blocks);
    let mut pieces = Vec::new();
    for (idx, (start, heading_end, title)) in sections.iter().enumerate() {
        let end = sections.get(idx + 1).map_or(region.end, |s| s.0);
        let mut section_pieces: Vec<Piece> = Vec::new();
        let mut cursor = *start;
        for (range, env, optarg) in units.iter().filter(|(r, _, _)| r.start >= *start && r.end <= end) {
            if !text[cursor..range.start].trim().is_empty() {
                section_pieces.push(Piece {
                    range: cursor..range.start,
                    kind: ChunkKind::Theory,
                    title: title.clone(),
                });
            }
            section_pieces.push(Piece {
                range: range.clone(),
                kind: kind_for(env),
                title: optarg.clone().or_else(|| title.clone()),
            });
            cursor = range.end;
        }
        if !text[cursor..end].trim().is_empty() {
            section_pieces.push(Piece {
                range: cursor..end,
                kind: ChunkKind::Theory,
                title: title.clone(),
            });
        }
        // A heading with nothing after it before the next unit joins that unit.
        if section_pieces.len() > 1 {
            let first = &section_pieces[0];
            if first.range.start == *start
                && text[*heading_end..first.range.end].trim().is_empty()
                && heading_end > start
            {
                let next_start = first.range.start;
                section_pieces.remove(0);
                section_pieces[0].range.start = next_start;
            }
        }
        pieces.extend(section_pieces);
    }
    pieces
}

fn trimmed_chars(text: &str, range: &Range<usize>) -> usize {
    text[range.clone()].trim().chars().count()
}

fn merge_short(text: &str, pieces: Vec<Piece>, min_chars: usize) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    let mut carry: Option<Piece> = None;
    for mut piece in pieces {
        if let Some(head) = carry.take() {
            // A short leading piece is absorbed by its successor.
            piece.range.start = head.range.start;
            if piece.title.is_none() {
                piece.title = head.title;
            }
        }
        if trimmed_chars(text, &piece.range) >= min_chars {
            out.push(piece);
            continue;
        }
        match out.last_mut() {
            Some(prev) => prev.range.end = piece.range.end,
            None => carry = Some(piece),
        }
    }
    if let Some(head) = carry {
        out.push(head);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ChunkParams {
        ChunkParams {
            min_chunk_chars: 1,
            max_chunk_chars: 4000,
        }
    }

    fn seg(latex: &str, params: &ChunkParams) -> Vec<Chunk> {
        segment_rule_based(&LatexDocument::native("doc", latex), params).unwrap()
    }

    #[test]
    fn sections_split_into_titled_theory_chunks() {
        let chunks = seg(r"\section{A} x \section{B} y", &tiny());
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].latex, r"\section{A} x");
        assert_eq!(chunks[1].latex, r"\section{B} y");
        assert_eq!(chunks[0].title.as_deref(), Some("A"));
        assert_eq!(chunks[1].title.as_deref(), Some("B"));
        assert!(chunks.iter().all(|c| c.kind == ChunkKind::Theory));
        assert_eq!(chunks[0].chunk_id, "doc:0000");
        assert_eq!(chunks[1].chunk_id, "doc:0001");
    }

    #[test]
    fn theorem_keeps_following_proof() {
        let chunks = seg(r"\begin{theorem}T\end{theorem}\begin{proof}P\end{proof}", &tiny());
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].latex.contains('T') && chunks[0].latex.contains('P'));
    }

    #[test]
    fn problem_with_solution_is_one_chunk() {
        let text = "Intro text.\n\\begin{problem}Find x.\\end{problem}\n\\begin{solution}x=1.\\end{solution}\nOutro.";
        let chunks = seg(text, &tiny());
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[1].kind, ChunkKind::ProblemSolution);
        assert!(chunks[1].latex.ends_with(r"\end{solution}"));
    }

    #[test]
    fn unclosed_environment_errors() {
        let err = segment_rule_based(&LatexDocument::native("d", r"\begin{theorem}T"), &tiny()).unwrap_err();
        assert!(matches!(err, IngestError::Unbalanced { environment, .. } if environment == "theorem"));
    }

    #[test]
    fn heading_attaches_to_first_block() {
        let chunks = seg("\\section{Ineq}\n\\begin{lemma}[AM-GM]L\\end{lemma}", &tiny());
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].latex.starts_with(r"\section{Ineq}"));
        assert_eq!(chunks[0].title.as_deref(), Some("AM-GM"));
    }

    #[test]
    fn short_chunks_merge_into_predecessor() {
        let long = "w ".repeat(120);
        let text = format!("\\section{{A}} {long}\n\\section{{B}} tiny");
        let chunks = seg(&text, &ChunkParams::default());
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].latex.ends_with("tiny"));
        assert_eq!(chunks[0].title.as_deref(), Some("A"));
    }

    #[test]
    fn short_first_chunk_merges_forward() {
        let long = "w ".repeat(120);
        let text = format!("pre\n\\section{{A}} {long}");
        let chunks = seg(&text, &ChunkParams::default());
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].latex.starts_with("pre"));
        assert_eq!(chunks[0].title.as_deref(), Some("A"));
    }

    #[test]
    fn orphan_proof_is_residual_text() {
        let chunks = seg(r"\begin{proof}P\end{proof}", &tiny());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].kind, ChunkKind::Theory);
    }

    #[test]
    fn deterministic_output() {
        let text = "\\section{S}\n\\begin{example}E\\end{example}\\begin{solution}S\\end{solution}\nrest";
        assert_eq!(seg(text, &tiny()), seg(text, &tiny()));
    }

    #[test]
    fn single_valid_chunk_is_fixed_point() {
        let text = r"\begin{theorem}[Fermat] $a^p \equiv a$ \end{theorem} \begin{proof} Induct on $a$. \end{proof}";
        let first = seg(text, &tiny());
        assert_eq!(first.len(), 1);
        let again = seg(&first[0].latex, &tiny());
        assert_eq!(again, first);
    }
}
