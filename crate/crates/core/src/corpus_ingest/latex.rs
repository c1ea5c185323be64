//! Minimal LaTeX scanner: environments, sectioning commands and comments.
//!
//! Only the structure needed for segmentation is recognised. Control symbols
//! (`\%`, `\\`, `\{`) are skipped as units so escaped percent signs never
//! start a comment.

use std::ops::Range;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Event {
    Begin {
        name: String,
        /// Byte range of `\begin{name}` plus an optional `[...]` argument.
        span: Range<usize>,
        optarg: Option<String>,
    },
    End {
        name: String,
        span: Range<usize>,
    },
    Section {
        span: Range<usize>,
        title: String,
    },
}

/// A depth-0 environment with its full extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Block {
    pub name: String,
    pub range: Range<usize>,
    pub optarg: Option<String>,
}

/// A depth-0 sectioning command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Heading {
    pub span: Range<usize>,
    pub title: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Structure {
    pub blocks: Vec<Block>,
    pub headings: Vec<Heading>,
}

const SECTION_COMMANDS: [&str; 2] = ["section", "subsection"];

fn skip_spaces(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        i += 1;
    }
    i
}

/// Reads a balanced group opening at `i` (`open`/`close` delimiters).
/// Returns the inner text range and the index after the closing delimiter.
fn read_group(text: &str, i: usize, open: u8, close: u8) -> Option<(Range<usize>, usize)> {
    let bytes = text.as_bytes();
    if bytes.get(i) != Some(&open) {
        return None;
    }
    let mut depth = 0usize;
    let mut j = i;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' => {
                j += 2;
                continue;
            }
            b if b == open => depth += 1,
            b if b == close => {
                depth -= 1;
                if depth == 0 {
                    return Some((i + 1..j, j + 1));
                }
            }
            b'\n' if open == b'[' => return None,
            _ => {}
        }
        j += 1;
    }
    None
}

pub(crate) fn scan(text: &str) -> Vec<Event> {
    let bytes = text.as_bytes();
    let mut events = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'\\' => {
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
                    j += 1;
                }
                if j == i + 1 {
                    // Control symbol such as \% or \\; skip the escaped character.
                    i = (i + 2).min(bytes.len());
                    while i < bytes.len() && !text.is_char_boundary(i) {
                        i += 1;
                    }
                    continue;
                }
                let name = &text[i + 1..j];
                match name {
                    "begin" | "end" => {
                        let k = skip_spaces(bytes, j);
                        if let Some((inner, after)) = read_group(text, k, b'{', b'}') {
                            let env = text[inner].trim().to_string();
                            if name == "begin" {
                                let (optarg, end) = match read_group(text, after, b'[', b']') {
                                    Some((arg, after_arg)) => (Some(text[arg].trim().to_string()), after_arg),
                                    None => (None, after),
                                };
                                events.push(Event::Begin {
                                    name: env,
                                    span: start..end,
                                    optarg,
                                });
                                i = end;
                            } else {
                                events.push(Event::End {
                                    name: env,
                                    span: start..after,
                                });
                                i = after;
                            }
                            continue;
                        }
                        i = j;
                    }
                    _ if SECTION_COMMANDS.contains(&name) => {
                        let mut k = j;
                        if bytes.get(k) == Some(&b'*') {
                            k += 1;
                        }
                        k = skip_spaces(bytes, k);
                        if let Some((_, after)) = read_group(text, k, b'[', b']') {
                            k = skip_spaces(bytes, after);
                        }
                        if let Some((inner, after)) = read_group(text, k, b'{', b'}') {
                            events.push(Event::Section {
                                span: start..after,
                                title: text[inner].trim().to_string(),
                            });
                            i = after;
                            continue;
                        }
                        i = j;
                    }
                    _ => i = j,
                }
            }
            _ => i += 1,
        }
    }
    events
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Checks that every `\begin{X}` has a matching `\end{X}`.
pub fn validate(text: &str) -> Result<(), IngestError> {
    validate_events(text, &scan(text))
}

fn validate_events(text: &str, events: &[Event]) -> Result<(), IngestError> {
    let mut stack: Vec<(&str, usize)> = Vec::new();
    for event in events {
        match event {
            Event::Begin { name, span, .. } => stack.push((name, span.start)),
            Event::End { name, span } => match stack.pop() {
                Some((open, _)) if open == name => {}
                Some((open, at)) => {
                    return Err(IngestError::Unbalanced {
                        environment: open.to_string(),
                        line: line_of(text, at),
                        detail: format!("closed by \\end{{{name}}} on line {}", line_of(text, span.start)),
                    })
                }
                None => {
                    return Err(IngestError::Unbalanced {
                        environment: name.clone(),
                        line: line_of(text, span.start),
                        detail: "\\end without a matching \\begin".into(),
                    })
                }
            },
            Event::Section { .. } => {}
        }
    }
    if let Some((open, at)) = stack.first() {
        return Err(IngestError::Unbalanced {
            environment: open.to_string(),
            line: line_of(text, *at),
            detail: "\\begin is never closed".into(),
        });
    }
    Ok(())
}

/// Depth-0 environments and headings of a validated text.
pub(crate) fn structure(text: &str) -> Result<Structure, IngestError> {
    let events = scan(text);
    validate_events(text, &events)?;
    let mut out = Structure::default();
    let mut depth = 0usize;
    let mut open: Option<(String, usize, Option<String>)> = None;
    for event in &events {
        match event {
            Event::Begin { name, span, optarg } => {
                if depth == 0 {
                    open = Some((name.clone(), span.start, optarg.clone()));
                }
                depth += 1;
            }
            Event::End { span, .. } => {
                depth -= 1;
                if depth == 0 {
                    let (name, start, optarg) = open.take().expect("validated nesting");
                    out.blocks.push(Block {
                        name,
                        range: start..span.end,
                        optarg,
                    });
                }
            }
            Event::Section { span, title } if depth == 0 => out.headings.push(Heading {
                span: span.clone(),
                title: title.clone(),
            }),
            Event::Section { .. } => {}
        }
    }
    debug_assert!(out.blocks.windows(2).all(|w| w[0].range.end <= w[1].range.start));
    Ok(out)
}

/// Environment nesting depth after each event in an arbitrary slice. A cut
/// exactly at a `\begin` is still outside that environment.
/// Unbalanced input is tolerated: stray `\end`s saturate at zero.
pub(crate) fn depth_profile(text: &str) -> Vec<(usize, usize)> {
    let mut depth = 0usize;
    let mut out = vec![(0, 0)];
    for event in scan(text) {
        match event {
            Event::Begin { span, .. } => {
                depth += 1;
                out.push((span.start + 1, depth));
            }
            Event::End { span, .. } => {
                depth = depth.saturating_sub(1);
                out.push((span.end, depth));
            }
            Event::Section { .. } => {}
        }
    }
    out
}

/// Depth at byte offset `at` given a profile from [`depth_profile`].
pub(crate) fn depth_at(profile: &[(usize, usize)], at: usize) -> usize {
    match profile.binary_search_by(|(pos, _)| pos.cmp(&at)) {
        Ok(i) => profile[i].1,
        Err(i) => profile[i.saturating_sub(1)].1,
    }
}
