//! Lean subprocess checker.
//!
//! The source is written to `attempt_<run_id>_<problem>_<iter>.lean` inside
//! the project directory, checked with `<lean_cmd> <file>`, and removed.

use std::io::{ErrorKind, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::Value;

use super::{CheckJob, Diagnostic, ProofChecker, Severity, Verdict, VerdictStatus, VerifierError};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeanConfig {
    /// Checker command line, split on whitespace. The temp file path is
    /// appended. Lean 4 projects typically use `lake env lean --json`.
    pub lean_cmd: String,
    pub lean_project_dir: PathBuf,
    pub verify_timeout_s: u64,
}

impl Default for LeanConfig {
    fn default() -> Self {
        Self {
            lean_cmd: "lean --json".into(),
            lean_project_dir: PathBuf::from("."),
            verify_timeout_s: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeanChecker {
    config: LeanConfig,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

impl LeanChecker {
    pub fn new(config: LeanConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &LeanConfig {
        &self.config
    }

    fn temp_path(&self, job: &CheckJob) -> PathBuf {
        self.config.lean_project_dir.join(format!(
            "attempt_{}_{}_{}.lean",
            sanitize(&job.run_id),
            sanitize(&job.problem),
            job.iteration
        ))
    }

    fn command(&self) -> Option<(String, Vec<String>)> {
        let mut parts = self.config.lean_cmd.split_whitespace().map(String::from);
        let program = parts.next()?;
        Some((program, parts.collect()))
    }

    fn run(&self, file: &Path, started: Instant) -> Verdict {
        let environment_error = |message: String| Verdict {
            status: VerdictStatus::EnvironmentError,
            diagnostics: vec![Diagnostic::error(0, 0, message)],
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        let Some((program, args)) = self.command() else {
            return environment_error("lean_cmd is empty".into());
        };
        if !self.config.lean_project_dir.is_dir() {
            return environment_error(format!(
                "Lean project directory {} does not exist",
                self.config.lean_project_dir.display()
            ));
        }
        let file_name = file
            .file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| file.to_path_buf());
        let mut command = Command::new(&program);
        command
            .args(&args)
            .arg(&file_name)
            .current_dir(&self.config.lean_project_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        let child = command.spawn();
        let mut child = match child {
            Ok(child) => child,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return environment_error(format!("Lean toolchain `{program}` not found"))
            }
            Err(e) => return environment_error(format!("cannot start `{program}`: {e}")),
        };
        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        let limit = Duration::from_secs(self.config.verify_timeout_s);
        let exit = wait_with_limit(&mut child, started, limit);
        let (out, err) = if exit.is_some() {
            (stdout.finish(), stderr.finish())
        } else {
            // Output gathered before the kill; readers are left to finish on their own.
            (stdout.snapshot(), stderr.snapshot())
        };
        let mut diagnostics = parse_diagnostics(&out);
        diagnostics.extend(parse_diagnostics(&err));
        let elapsed_ms = started.elapsed().as_millis() as u64;

        let status = match exit {
            None => VerdictStatus::Timeout,
            Some(true) => VerdictStatus::Verified,
            Some(false) => {
                if !diagnostics.iter().any(|d| d.severity == Severity::Error) {
                    let text = if err.trim().is_empty() { &out } else { &err };
                    diagnostics.push(Diagnostic::error(0, 0, tail(text.trim(), 2000)));
                }
                VerdictStatus::Failed
            }
        };
        Verdict {
            status,
            diagnostics,
            elapsed_ms,
        }
    }
}

fn tail(text: &str, max_chars: usize) -> String {
    let n = text.chars().count();
    text.chars().skip(n.saturating_sub(max_chars)).collect()
}

struct Drain {
    buf: Arc<Mutex<Vec<u8>>>,
    handle: thread::JoinHandle<()>,
}

impl Drain {
    fn snapshot(&self) -> String {
        String::from_utf8_lossy(&self.buf.lock().expect("drain lock")).into_owned()
    }

    fn finish(self) -> String {
        let Drain { buf, handle } = self;
        let _ = handle.join();
        let bytes = buf.lock().expect("drain lock").clone();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> Drain {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&buf);
    let handle = thread::spawn(move || {
        let Some(mut pipe) = pipe else { return };
        let mut chunk = [0u8; 8192];
        while let Ok(n) = pipe.read(&mut chunk) {
            if n == 0 {
                break;
            }
            sink.lock().expect("drain lock").extend_from_slice(&chunk[..n]);
        }
    });
    Drain { buf, handle }
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: killpg has no memory-safety preconditions; the child leads its own group.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// `Some(success)` on exit, `None` after killing a process that overran.
fn wait_with_limit(child: &mut Child, started: Instant, limit: Duration) -> Option<bool> {
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status.success()),
            Ok(None) if started.elapsed() >= limit => {
                kill_tree(child);
                return None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(20)),
            Err(_) => return Some(false),
        }
    }
}

impl ProofChecker for LeanChecker {
    fn check(&self, source: &str, job: &CheckJob) -> Result<Verdict, VerifierError> {
        let started = Instant::now();
        let path = self.temp_path(job);
        if let Err(e) = std::fs::write(&path, source) {
            return Ok(Verdict {
                status: VerdictStatus::EnvironmentError,
                diagnostics: vec![Diagnostic::error(0, 0, format!("cannot write {}: {e}", path.display()))],
                elapsed_ms: started.elapsed().as_millis() as u64,
            });
        }
        tracing::debug!(file = %path.display(), "running Lean");
        let verdict = self.run(&path, started);
        if let Err(e) = std::fs::remove_file(&path) {
            tracing::warn!(file = %path.display(), %e, "could not remove temp file");
        }
        Ok(verdict)
    }

    fn version(&self) -> String {
        let Some((program, args)) = self.command() else {
            return "unknown".into();
        };
        let args: Vec<&String> = args.iter().filter(|a| *a != "--json").collect();
        Command::new(&program)
            .args(args)
            .arg("--version")
            .current_dir(
                Some(&self.config.lean_project_dir)
                    .filter(|d| d.is_dir())
                    .map_or_else(|| Path::new("."), |d| d.as_path()),
            )
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("unavailable ({program})"))
    }
}

fn as_u32(v: &Value) -> Option<u32> {
    v.as_u64().map(|n| n as u32)
}

fn from_json(value: &Value) -> Option<Diagnostic> {
    // Lean 3: {"pos_line", "pos_col", "severity", "text"}.
    if let (Some(line), Some(text)) = (as_u32(&value["pos_line"]), value["text"].as_str()) {
        return Some(Diagnostic {
            line,
            column: as_u32(&value["pos_col"]).unwrap_or(0),
            severity: Severity::parse(value["severity"].as_str().unwrap_or("error")),
            message: text.trim().to_string(),
        });
    }
    // Lean 4: {"pos": {"line", "column"}, "severity", "data"}.
    let data = value["data"].as_str()?;
    Some(Diagnostic {
        line: as_u32(&value["pos"]["line"]).unwrap_or(0),
        column: as_u32(&value["pos"]["column"]).unwrap_or(0),
        severity: Severity::parse(value["severity"].as_str().unwrap_or("error")),
        message: data.trim().to_string(),
    })
}

/// `file:line:col: severity: message`, with continuation lines appended.
fn from_text_header(line: &str) -> Option<Diagnostic> {
    let mut idx = 0;
    while let Some(found) = line[idx..].find(':') {
        let at = idx + found;
        let rest = &line[at + 1..];
        let mut fields = rest.splitn(4, ':');
        if let (Some(l), Some(c), Some(sev), Some(msg)) = (fields.next(), fields.next(), fields.next(), fields.next()) {
            if let (Ok(l), Ok(c)) = (l.trim().parse::<u32>(), c.trim().parse::<u32>()) {
                let sev = sev.trim();
                if matches!(sev, "error" | "warning" | "information" | "info") {
                    return Some(Diagnostic {
                        line: l,
                        column: c,
                        severity: Severity::parse(sev),
                        message: msg.trim().to_string(),
                    });
                }
            }
        }
        idx = at + 1;
    }
    None
}

/// Parses checker output: JSON messages per line where present, otherwise
/// `file:line:col: severity: message` text.
pub fn parse_diagnostics(output: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = Vec::new();
    let mut continuing = false;
    for line in output.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with('{') {
            if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
                if let Some(d) = from_json(&value) {
                    out.push(d);
                }
                continuing = false;
                continue;
            }
        }
        if let Some(d) = from_text_header(line) {
            out.push(d);
            continuing = true;
        } else if continuing && !line.trim().is_empty() {
            let last = out.last_mut().expect("continuing implies a diagnostic");
            if !last.message.is_empty() {
                last.message.push('\n');
            }
            last.message.push_str(line.trim_end());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lean3_json_messages() {
        let out = r#"{"caption":"","file_name":"/p/a.lean","pos_col":2,"pos_line":9,"severity":"error","text":"unknown identifier 'foo'"}
{"caption":"","file_name":"/p/a.lean","pos_col":0,"pos_line":1,"severity":"warning","text":"declaration uses 'sorry'"}"#;
        let d = parse_diagnostics(out);
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].line, d[0].column), (9, 2));
        assert_eq!(d[0].message, "unknown identifier 'foo'");
        assert_eq!(d[1].severity, Severity::Warning);
    }

    #[test]
    fn lean4_json_messages() {
        let out = r#"{"severity":"error","pos":{"line":3,"column":4},"endPos":null,"fileName":"a.lean","data":"unsolved goals"}"#;
        let d = parse_diagnostics(out);
        assert_eq!(d, vec![Diagnostic::error(3, 4, "unsolved goals")]);
    }

    #[test]
    fn text_messages_with_continuations() {
        let out =
            "attempt_r_p_1.lean:5:2: error: type mismatch\n  h\nhas type\n  a = 1\n/abs/x.lean:7:0: warning: unused";
        let d = parse_diagnostics(out);
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].line, d[0].column), (5, 2));
        assert!(d[0].message.starts_with("type mismatch\n  h"));
        assert_eq!(d[1].severity, Severity::Warning);
    }

    #[test]
    fn temp_names_are_sanitized() {
        let checker = LeanChecker::new(LeanConfig {
            lean_project_dir: PathBuf::from("/proj"),
            ..LeanConfig::default()
        });
        let job = CheckJob {
            run_id: "run 1".into(),
            problem: "mathd_algebra/419".into(),
            iteration: 2,
        };
        assert_eq!(
            checker.temp_path(&job),
            PathBuf::from("/proj/attempt_run_1_mathd_algebra_419_2.lean")
        );
    }

    fn checker(dir: &Path, cmd: &str, timeout: u64) -> LeanChecker {
        LeanChecker::new(LeanConfig {
            lean_cmd: cmd.into(),
            lean_project_dir: dir.to_path_buf(),
            verify_timeout_s: timeout,
        })
    }

    fn job() -> CheckJob {
        CheckJob {
            run_id: "t".into(),
            problem: "p".into(),
            iteration: 1,
        }
    }

    #[test]
    fn missing_toolchain_is_environment_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = checker(dir.path(), "definitely-not-a-lean-binary --json", 5)
            .check("x", &job())
            .unwrap();
        assert_eq!(v.status, VerdictStatus::EnvironmentError);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[cfg(unix)]
    #[test]
    fn exit_status_and_diagnostics_map_to_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let ok = checker(dir.path(), "true", 5).check("begin end", &job()).unwrap();
        assert_eq!(ok.status, VerdictStatus::Verified);

        let script = dir.path().join("fake_lean.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\necho \"$1:3:1: error: unknown identifier 'nlinarith'\"\nexit 1\n",
        )
        .unwrap();
        let cmd = format!("sh {}", script.display());
        let bad = checker(dir.path(), &cmd, 5).check("begin end", &job()).unwrap();
        assert_eq!(bad.status, VerdictStatus::Failed);
        assert_eq!(bad.diagnostics[0].line, 3);
        assert!(!dir.path().join("attempt_t_p_1.lean").exists());
    }

    #[cfg(unix)]
    #[test]
    fn overrun_is_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("slow.sh");
        std::fs::write(&script, "#!/bin/sh\nsleep 5\n").unwrap();
        let cmd = format!("sh {}", script.display());
        let v = checker(dir.path(), &cmd, 0).check("x", &job()).unwrap();
        assert_eq!(v.status, VerdictStatus::Timeout);
    }
}
