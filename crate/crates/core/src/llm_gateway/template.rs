//! Prompt templates with `{name}` placeholders.
//!
//! Placeholders are `{identifier}` where the identifier is ASCII letters,
//! digits and underscores. `{{` and `}}` produce literal braces. Any other
//! brace is literal text, so LaTeX such as `\frac{1}{2}` needs no escaping
//! unless its braced content looks like an identifier (`\begin{{proof}}`).
//!
//! Rendering is a single pass: bound values are inserted verbatim and never
//! scanned for further placeholders.

use std::collections::BTreeSet;

use serde::Deserialize;
use thiserror::Error;

use super::{Message, Role};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` references undeclared placeholder `{placeholder}`")]
    Undeclared { template: String, placeholder: String },
    #[error("template `{template}` is missing a binding for `{placeholder}`")]
    MissingBinding { template: String, placeholder: String },
    #[error("template `{template}` has no messages")]
    Empty { template: String },
    #[error("template file is malformed: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TemplateMessage {
    role: Role,
    pieces: Vec<Piece>,
}

/// An ordered list of role messages with named placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    version: u32,
    placeholders: BTreeSet<String>,
    messages: Vec<TemplateMessage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    id: String,
    #[serde(default = "default_version")]
    version: u32,
    #[serde(default)]
    placeholders: Vec<String>,
    messages: Vec<MessageFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageFile {
    role: Role,
    text: String,
}

fn default_version() -> u32 {
    1
}

impl PromptTemplate {
    pub fn new<I, S>(
        id: impl Into<String>,
        placeholders: I,
        messages: Vec<(Role, String)>,
    ) -> Result<Self, TemplateError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let id = id.into();
        let placeholders: BTreeSet<String> = placeholders.into_iter().map(Into::into).collect();
        if messages.is_empty() {
            return Err(TemplateError::Empty { template: id });
        }
        let mut parsed = Vec::with_capacity(messages.len());
        for (role, text) in messages {
            let pieces = parse_pieces(&text);
            for piece in &pieces {
                if let Piece::Slot(name) = piece {
                    if !placeholders.contains(name) {
                        return Err(TemplateError::Undeclared {
                            template: id,
                            placeholder: name.clone(),
                        });
                    }
                }
            }
            parsed.push(TemplateMessage { role, pieces });
        }
        Ok(Self {
            id,
            version: 1,
            placeholders,
            messages: parsed,
        })
    }

    /// Parses the TOML asset format used by the files under `prompts/`.
    pub fn from_toml_str(source: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(source).map_err(|e| TemplateError::Parse(e.to_string()))?;
        let messages = file.messages.into_iter().map(|m| (m.role, m.text)).collect();
        let mut template = Self::new(file.id, file.placeholders, messages)?;
        template.version = file.version;
        Ok(template)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.placeholders.iter().map(String::as_str)
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<Vec<Message>, TemplateError> {
        let lookup = |name: &str| bindings.iter().find(|(key, _)| *key == name).map(|(_, value)| *value);
        let mut out = Vec::with_capacity(self.messages.len());
        for message in &self.messages {
            let mut content = String::new();
            for piece in &message.pieces {
                match piece {
                    Piece::Text(text) => content.push_str(text),
                    Piece::Slot(name) => match lookup(name) {
                        Some(value) => content.push_str(value),
                        None => {
                            return Err(TemplateError::MissingBinding {
                                template: self.id.clone(),
                                placeholder: name.clone(),
                            })
                        }
                    },
                }
            }
            out.push(Message::new(message.role, content));
        }
        Ok(out)
    }
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn parse_pieces(text: &str) -> Vec<Piece> {
    let bytes = text.as_bytes();
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut i = 0;
    let mut last = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                literal.push_str(&text[last..i]);
                literal.push('{');
                i += 2;
                last = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                literal.push_str(&text[last..i]);
                literal.push('}');
                i += 2;
                last = i;
            }
            b'{' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && is_ident_byte(bytes[j]) {
                    j += 1;
                }
                if j > start && bytes.get(j) == Some(&b'}') && !bytes[start].is_ascii_digit() {
                    literal.push_str(&text[last..i]);
                    if !literal.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    pieces.push(Piece::Slot(text[start..j].to_string()));
                    i = j + 1;
                    last = i;
                } else {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    literal.push_str(&text[last..]);
    if !literal.is_empty() {
        pieces.push(Piece::Text(literal));
    }
    pieces
}
