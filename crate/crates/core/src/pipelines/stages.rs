//! Individual pipeline stages. Each is usable on its own.

use thiserror::Error;

use super::{PipelineError, Problem};
use crate::knowledge_base::ScoredChunk;
use crate::llm_gateway::{CallContext, DecodingParams, Gateway, GatewayError, Message, PromptTemplate};

/// Context slot value when retrieval produced nothing.
pub const NO_MATERIAL: &str = "No reference material available.";

/// Value bound to optional placeholders that have nothing to show.
pub const NONE_PLACEHOLDER: &str = "(none)";

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The informal statement with whitespace runs collapsed to single spaces.
pub fn build_basic_query(problem: &Problem) -> Result<String, PipelineError> {
    let query = collapse_whitespace(&problem.informal_statement);
    if query.is_empty() {
        return Err(PipelineError::EmptyStatement(problem.name.clone()));
    }
    Ok(query)
}

/// `"k1; k2; ...; " + statement`.
pub fn build_eqg_query(keywords: &[String], problem: &Problem) -> Result<String, PipelineError> {
    if keywords.is_empty() {
        return Err(PipelineError::NoKeywords);
    }
    let statement = build_basic_query(problem)?;
    Ok(format!("{}; {statement}", keywords.join("; ")))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeywordError {
    #[error("keyword response contained no keywords")]
    Empty,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn strip_marker(item: &str) -> &str {
    let item = item.trim();
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = item.strip_prefix(bullet) {
            return rest.trim();
        }
    }
    let digits = item.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &item[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    item
}

/// Splits on commas that are not inside brackets.
fn split_top_level_commas(line: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in line.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth <= 0 => {
                parts.push(&line[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&line[start..]);
    parts
}

/// Parses a newline- or comma-separated keyword list. Items are trimmed,
/// list markers removed, empties dropped, and duplicates (compared
/// case-insensitively) removed keeping the first occurrence.
pub fn parse_keywords(response: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for line in response.lines() {
        let line = line.trim();
        if line.starts_with("```") || (line.ends_with(':') && !line.contains(',')) {
            continue;
        }
        for part in split_top_level_commas(line) {
            let item = strip_marker(part).trim_matches(|c: char| c == '`' || c == '"' || c == '*');
            let item = item.strip_suffix('.').unwrap_or(item).trim();
            if item.is_empty() {
                continue;
            }
            if seen.insert(item.to_lowercase()) {
                out.push(item.to_string());
            }
        }
    }
    out
}

/// Asks the model for relevant concepts. `prior_proof` is supplied from the
/// second IPA iteration on.
pub fn extract_keywords(
    gateway: &Gateway,
    template: &PromptTemplate,
    ctx: &CallContext,
    problem: &Problem,
    prior_proof: Option<&str>,
    params: &DecodingParams,
) -> Result<Vec<String>, KeywordError> {
    let response = gateway.complete_template(
        ctx,
        template,
        &[
            ("statement", problem.informal_statement.trim()),
            ("prior_proof", prior_proof.unwrap_or(NONE_PLACEHOLDER)),
        ],
        params,
    );
    let keywords = match response {
        Ok(text) => parse_keywords(&text),
        Err(GatewayError::EmptyResponse) => Vec::new(),
        Err(err) => return Err(err.into()),
    };
    if keywords.is_empty() {
        return Err(KeywordError::Empty);
    }
    Ok(keywords)
}

/// Reference material in score order, each entry headed by its kind and title.
pub fn render_context(retrieved: &[ScoredChunk]) -> String {
    if retrieved.is_empty() {
        return NO_MATERIAL.to_string();
    }
    retrieved
        .iter()
        .enumerate()
        .map(|(i, scored)| {
            let chunk = &scored.chunk;
            let head = match &chunk.title {
                Some(title) => format!("[{}] {} ({})", i + 1, title, chunk.kind),
                None => format!("[{}] ({})", i + 1, chunk.kind),
            };
            format!("{head}\n{}", chunk.latex)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders the informal-proof prompt.
pub fn augment_prompt(
    template: &PromptTemplate,
    problem: &Problem,
    retrieved: &[ScoredChunk],
    previous_proof: Option<&str>,
    feedback: Option<&str>,
) -> Result<Vec<Message>, GatewayError> {
    let context = render_context(retrieved);
    Ok(template.render(&[
        ("context", &context),
        ("statement", problem.informal_statement.trim()),
        ("previous_proof", previous_proof.unwrap_or(NONE_PLACEHOLDER)),
        ("feedback", feedback.unwrap_or(NONE_PLACEHOLDER)),
    ])?)
}

/// Sends the augmented prompt; the response is the informal proof verbatim.
pub fn generate_informal_proof(
    gateway: &Gateway,
    ctx: &CallContext,
    messages: &[Message],
    params: &DecodingParams,
) -> Result<String, GatewayError> {
    gateway.complete(ctx, messages, params)
}

/// Removes a Markdown code fence around the text, or extracts the first
/// fenced block when prose surrounds it.
pub fn strip_code_fences(text: &str) -> String {
    let trimmed = text.trim();
    let Some(open) = trimmed.find("```") else {
        return trimmed.to_string();
    };
    let after_open = &trimmed[open + 3..];
    let body_start = after_open.find('\n').map_or(after_open.len(), |i| i + 1);
    let body = &after_open[body_start..];
    let inner = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    inner.trim_matches('\n').trim_end().to_string()
}

/// Asks the model to turn `informal_proof` into Lean for the problem's
/// formal statement.
pub fn formalize_proof(
    gateway: &Gateway,
    template: &PromptTemplate,
    ctx: &CallContext,
    problem: &Problem,
    informal_proof: &str,
    params: &DecodingParams,
) -> Result<String, GatewayError> {
    let response = gateway.complete_template(
        ctx,
        template,
        &[
            ("formal_statement", problem.formal_statement.trim()),
            ("informal_proof", informal_proof),
        ],
        params,
    )?;
    let code = strip_code_fences(&response);
    if code.trim().is_empty() {
        return Err(GatewayError::EmptyResponse);
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_ingest::{Chunk, ChunkKind, ChunkSource};
    use crate::llm_gateway::PromptSet;
    use crate::pipelines::Split;

    pub(crate) fn problem(statement: &str) -> Problem {
        Problem {
            name: "p".into(),
            split: Split::Validation,
            informal_statement: statement.into(),
            formal_statement: "theorem p : true :=".into(),
        }
    }

    fn scored(id: &str, title: Option<&str>, latex: &str, score: f64) -> ScoredChunk {
        ScoredChunk {
            chunk: Chunk {
                chunk_id: id.into(),
                source: ChunkSource {
                    document_id: "d".into(),
                    pages: None,
                },
                kind: ChunkKind::Theory,
                latex: latex.into(),
                title: title.map(String::from),
            },
            score,
        }
    }

    #[test]
    fn basic_query_is_statement() {
        let s = "What is the value of $-a-b^2+3ab$ if $a=-1$ and $b=5$? Show that it is -39.";
        assert_eq!(build_basic_query(&problem(s)).unwrap(), s);
        assert!(matches!(
            build_basic_query(&problem("  \n")),
            Err(PipelineError::EmptyStatement(_))
        ));
        assert_eq!(
            build_basic_query(&problem("Find\n\n  $x$\tnow")).unwrap(),
            "Find $x$ now"
        );
    }

    #[test]
    fn eqg_query_joins_keywords() {
        let p = problem("S");
        assert_eq!(
            build_eqg_query(&["modular arithmetic".into()], &p).unwrap(),
            "modular arithmetic; S"
        );
        assert_eq!(
            build_eqg_query(&["a".into(), "b".into(), "c".into()], &p).unwrap(),
            "a; b; c; S"
        );
        assert_eq!(build_eqg_query(&[], &p), Err(PipelineError::NoKeywords));
    }

    #[test]
    fn keyword_parsing() {
        assert_eq!(
            parse_keywords("AM-GM inequality, Cauchy-Schwarz"),
            ["AM-GM inequality", "Cauchy-Schwarz"]
        );
        assert_eq!(parse_keywords("induction, induction"), ["induction"]);
        assert!(parse_keywords("").is_empty());
        assert_eq!(
            parse_keywords("Keywords:\n1. Vieta's formulas\n- Quadratic (roots, coefficients)\n* Induction."),
            ["Vieta's formulas", "Quadratic (roots, coefficients)", "Induction"]
        );
    }

    #[test]
    fn context_order_and_sentinel() {
        let ctx = render_context(&[
            scored("a", Some("AM-GM"), "$a+b \\ge 2\\sqrt{ab}$", 0.9),
            scored("b", None, "second", 0.8),
        ]);
        assert!(ctx.find("AM-GM").unwrap() < ctx.find("second").unwrap());
        assert!(ctx.contains("$a+b \\ge 2\\sqrt{ab}$"));
        assert_eq!(render_context(&[]), NO_MATERIAL);
        let prompts = PromptSet::builtin();
        let messages = augment_prompt(&prompts.informal_proof, &problem("S"), &[], None, None).unwrap();
        assert!(messages.iter().any(|m| m.content.contains(NO_MATERIAL)));
    }

    #[test]
    fn fences() {
        assert_eq!(
            strip_code_fences("```lean\nimport tactic\nbegin end\n```"),
            "import tactic\nbegin end"
        );
        assert_eq!(strip_code_fences("Here:\n```\nx\n```\nDone"), "x");
        assert_eq!(strip_code_fences("  plain  "), "plain");
    }
}
