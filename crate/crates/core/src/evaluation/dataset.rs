//! Problem datasets: JSON Lines of `{name, split, informal_statement, formal_statement}`.

use std::collections::HashSet;
use std::path::Path;

use serde_json::Value;

use super::EvalError;
use crate::pipelines::{Problem, Split};

pub fn load_problems(path: &Path, split: Option<Split>) -> Result<Vec<Problem>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    parse_problems(&text, split)
}

fn field<'a>(record: &'a Value, line: usize, name: &'static str) -> Result<&'a str, EvalError> {
    record
        .get(name)
        .and_then(Value::as_str)
        .ok_or(EvalError::MissingField { line, field: name })
}

/// Parses every record (so errors anywhere in the file surface), then keeps
/// those in `split`, in file order.
pub fn parse_problems(text: &str, split: Option<Split>) -> Result<Vec<Problem>, EvalError> {
    let mut names = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(raw).map_err(|e| EvalError::Parse {
            line,
            detail: e.to_string(),
        })?;
        let name = field(&record, line, "name")?.trim().to_string();
        if name.is_empty() {
            return Err(EvalError::MissingField { line, field: "name" });
        }
        let split_label = field(&record, line, "split")?;
        let problem_split = Split::parse(split_label).ok_or_else(|| EvalError::UnknownSplit {
            line,
            value: split_label.to_string(),
        })?;
        let informal = field(&record, line, "informal_statement")?;
        if informal.trim().is_empty() {
            return Err(EvalError::EmptyStatement { line, name });
        }
        let formal = field(&record, line, "formal_statement")?;
        if !names.insert(name.clone()) {
            return Err(EvalError::DuplicateName { line, name });
        }
        if split.is_none_or(|s| s == problem_split) {
            out.push(Problem {
                name,
                split: problem_split,
                informal_statement: informal.to_string(),
                formal_statement: formal.to_string(),
            });
        }
    }
    Ok(out)
}
