//! Conversion from the public MiniF2F layout into the JSON Lines dataset.
//!
//! Informal statements come from `<root>/valid/*.json` and `<root>/test/*.json`
//! (fields `problem_name`, `informal_statement`, optionally
//! `formal_statement`). Missing formal statements are filled from Lean
//! sources containing `theorem <name> ... :=` headers.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::EvalError;
use crate::pipelines::{Problem, Split};

/// Theorem headers (`theorem name ... :=`) keyed by theorem name.
pub fn extract_lean_theorems(source: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, String)> = None;
    for line in source.lines() {
        if current.is_none() {
            let trimmed = line.trim_start();
            let Some(rest) = trimmed.strip_prefix("theorem ") else {
                continue;
            };
            let name: String = rest
                .trim_start()
                .chars()
                .take_while(|c| !c.is_whitespace() && *c != ':' && *c != '(' && *c != '{' && *c != '[')
                .collect();
            if name.is_empty() {
                continue;
            }
            current = Some((name, String::new()));
        }
        let (name, text) = current.as_mut().expect("set above");
        if !text.is_empty() {
            text.push('\n');
        }
        match line.find(":=") {
            Some(at) => {
                text.push_str(&line[..at + 2]);
                out.insert(name.clone(), text.trim().to_string());
                current = None;
            }
            None => text.push_str(line),
        }
    }
    out
}

fn io(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

/// Reads both splits under `informal_root`. Problems are ordered by split
/// (validation first), then by name.
pub fn convert_minif2f(informal_root: &Path, lean_sources: &[&Path]) -> Result<Vec<Problem>, EvalError> {
    let mut headers = BTreeMap::new();
    for path in lean_sources {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        headers.extend(extract_lean_theorems(&text));
    }
    let mut out = Vec::new();
    for (dir, split) in [("valid", Split::Validation), ("test", Split::Test)] {
        let dir = informal_root.join(dir);
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| io(&dir, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            let record: Value = serde_json::from_str(&text).map_err(|e| io(&path, e))?;
            let name = record["problem_name"]
                .as_str()
                .map(String::from)
                .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_default();
            let informal = record["informal_statement"]
                .as_str()
                .ok_or_else(|| io(&path, "missing informal_statement"))?;
            let formal = record["formal_statement"]
                .as_str()
                .map(String::from)
                .or_else(|| headers.get(&name).cloned())
                .ok_or_else(|| io(&path, format!("no formal statement found for `{name}`")))?;
            out.push(Problem {
                name,
                split,
                informal_statement: informal.trim().to_string(),
                formal_statement: formal.trim().to_string(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lean_headers() {
        let src = "import data.real.basic\n\ntheorem mathd_algebra_419\n  (a b : ℝ)\n  (h₀ : a = -1)\n  (h₁ : b = 5) :\n  -a - b^2 + 3 * (a * b) = -39 :=\nbegin\n  sorry\nend\n\ntheorem amc12_2000_p1 (x : ℕ) : x = x :=\nbegin\n  refl\nend\n";
        let got = extract_lean_theorems(src);
        assert_eq!(got.len(), 2);
        assert!(got["mathd_algebra_419"].starts_with("theorem mathd_algebra_419\n  (a b : ℝ)"));
        assert!(got["mathd_algebra_419"].ends_with("= -39 :="));
        assert_eq!(got["amc12_2000_p1"], "theorem amc12_2000_p1 (x : ℕ) : x = x :=");
    }

    #[test]
    fn converts_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("valid")).unwrap();
        std::fs::create_dir_all(dir.path().join("test")).unwrap();
        std::fs::write(
            dir.path().join("valid/b.json"),
            r#"{"problem_name":"b","informal_statement":"Show b.","formal_statement":"theorem b : true :="}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("test/a.json"),
            r#"{"problem_name":"a","informal_statement":"Show a."}"#,
        )
        .unwrap();
        let lean = dir.path().join("test.lean");
        std::fs::write(&lean, "theorem a : 1 = 1 :=\nbegin refl end\n").unwrap();
        let got = convert_minif2f(dir.path(), &[lean.as_path()]).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].split, Split::Validation);
        assert_eq!(got[1].formal_statement, "theorem a : 1 = 1 :=");
    }
}
