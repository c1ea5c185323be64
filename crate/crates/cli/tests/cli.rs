use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lemmahead::knowledge_base::{EmbeddingClient, HashingEmbedder};
use lemmahead::KnowledgeBase;
use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn lemmahead(cwd: &Path, args: &[&str]) -> Run {
    lemmahead_env(cwd, args, &[])
}

fn lemmahead_env(cwd: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lemmahead"));
    cmd.current_dir(cwd).args(args).env_remove("RUST_LOG");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("LEMMAHEAD_")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ingests the three-section corpus into `dir/kb.lhkb` with the rule segmenter,
/// unless that store already exists.
fn build_store(dir: &Path) -> PathBuf {
    let store = dir.join("kb.lhkb");
    if store.exists() {
        return store;
    }
    let script = dir.join("ingest_mock.json");
    std::fs::write(&script, r#"{"embedding": {"hashing": 64}}"#).unwrap();
    let run = lemmahead(
        dir,
        &[
            "--mock-script",
            s(&script),
            "--set",
            "segmenter=rules",
            "ingest",
            s(&fixture("corpus/three_sections.tex")),
            "-o",
            s(&store),
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    store
}

#[test]
fn ingest_three_sections_builds_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_store(dir.path());
    let kb = KnowledgeBase::load(&store).unwrap();
    assert_eq!(kb.len(), 3);
    assert_eq!(kb.dimension(), Some(64));
    let titles: Vec<_> = kb.records().iter().map(|r| r.chunk.title.clone().unwrap()).collect();
    assert_eq!(titles, ["Substitution", "Order of operations", "Checking an answer"]);
}

#[test]
fn ingest_with_llm_segmenter_falls_back_to_rules_offline() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("m.json");
    std::fs::write(&script, "{}").unwrap();
    let run = lemmahead(
        dir.path(),
        &[
            "--mock-script",
            s(&script),
            "ingest",
            s(&fixture("corpus/three_sections.tex")),
            "-o",
            "kb.lhkb",
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("3 chunks"), "{}", run.stdout);
    assert!(run.stdout.contains("Flagged pages: none"));
    assert!(run.stdout.contains("dimension 64"));
}

#[test]
fn ingest_missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let run = lemmahead(dir.path(), &["ingest", "no_such_corpus.tex", "-o", "kb.lhkb"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("no_such_corpus.tex"), "{}", run.stderr);
    assert!(!dir.path().join("kb.lhkb").exists());
}

#[test]
fn ingest_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_store(dir.path());
    let before = std::fs::read(&store).unwrap();
    let script = dir.path().join("ingest_mock.json");
    let corpus = fixture("corpus/three_sections.tex");
    let args = [
        "--mock-script",
        s(&script),
        "--set",
        "segmenter=rules",
        "ingest",
        s(&corpus),
        "-o",
        s(&store),
    ];
    let run = lemmahead(dir.path(), &args);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("--force"));
    assert_eq!(std::fs::read(&store).unwrap(), before);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(lemmahead(dir.path(), &forced).code, 0);
}

fn query_json(dir: &Path, store: &Path, text: &str, k: &str) -> Vec<Value> {
    let script = dir.join("ingest_mock.json");
    let run = lemmahead(
        dir,
        &[
            "--mock-script",
            s(&script),
            "--store",
            s(store),
            "query",
            text,
            "-k",
            k,
            "--json",
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    run.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn query_matches_brute_force_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_store(dir.path());
    let text = "negative numbers exponent before multiplication";
    let hits = query_json(dir.path(), &store, text, "10");
    assert_eq!(hits.len(), 3, "k above the store size returns every record");

    // Oracle: raw hashing vectors, normalized here, scored by explicit dot products.
    let kb = KnowledgeBase::load(&store).unwrap();
    let raw = HashingEmbedder::new(64).embed(&[text]).unwrap().remove(0);
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    let mut oracle: Vec<(String, f64)> = kb
        .records()
        .iter()
        .map(|r| {
            let score = r.embedding.values().iter().zip(&q).map(|(a, b)| a * b).sum();
            (r.chunk.chunk_id.clone(), score)
        })
        .collect();
    oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    for (hit, (id, score)) in hits.iter().zip(&oracle) {
        assert_eq!(hit["chunk_id"], id.as_str());
        assert!((hit["score"].as_f64().unwrap() - score).abs() < 1e-6);
    }
}

#[test]
fn query_output_is_deterministic_with_four_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_store(dir.path());
    let script = dir.path().join("ingest_mock.json");
    let args = [
        "--mock-script",
        s(&script),
        "--store",
        s(&store),
        "query",
        "order of operations",
        "-k",
        "2",
    ];
    let first = lemmahead(dir.path(), &args);
    let second = lemmahead(dir.path(), &args);
    assert_eq!(first.code, 0);
    assert_eq!(first.stdout, second.stdout);
    let ranked: Vec<&str> = first.stdout.lines().filter(|l| !l.starts_with("    ")).collect();
    assert_eq!(ranked.len(), 2);
    for line in ranked {
        let score = line.split_whitespace().nth(1).unwrap();
        let (_, decimals) = score.split_once('.').unwrap();
        assert_eq!(decimals.len(), 4, "{line}");
    }
}

#[test]
fn query_on_empty_store_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("empty.lhkb");
    KnowledgeBase::new().save(&store).unwrap();
    let run = lemmahead(dir.path(), &["--store", s(&store), "query", "anything"]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("empty"));
}

#[test]
fn query_missing_store_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = lemmahead(dir.path(), &["--store", "missing.lhkb", "query", "anything"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("missing.lhkb"));
}

fn prove_replay(dir: &Path, extra: &[&str]) -> Run {
    let store = build_store(dir);
    let mut args = vec![
        "--mock-script".to_string(),
        s(&fixture("replay/mock_script.json")).to_owned(),
        "--store".into(),
        s(&store).to_owned(),
        "--set".into(),
        "runs_dir=runs".into(),
        "prove".into(),
        "mathd_algebra_419".into(),
        "--dataset".into(),
        s(&fixture("replay/dataset.jsonl")).to_owned(),
        "--run-id".into(),
        "replay".into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    lemmahead(dir, &refs)
}

#[test]
fn prove_ipa_sigma_5_saves_five_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let run = prove_replay(dir.path(), &["--variant", "ipa", "--sigma", "5"]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    assert!(run.stdout.contains("Verdict: verified"));
    let trace = dir.path().join("runs/replay/mathd_algebra_419.json");
    assert!(run.stdout.contains("runs/replay/mathd_algebra_419.json"));
    let attempt: Value = serde_json::from_str(&std::fs::read_to_string(trace).unwrap()).unwrap();
    assert_eq!(attempt["iterations"].as_array().unwrap().len(), 5);
    assert_eq!(attempt["final_verdict"]["status"], "verified");
    let transcript = std::fs::read_to_string(dir.path().join("runs/replay/transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 20, "15 chat calls and 5 retrievals");
}

#[test]
fn prove_refuses_to_overwrite_an_attempt() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(prove_replay(dir.path(), &[]).code, 0);
    let again = prove_replay(dir.path(), &[]);
    assert_eq!(again.code, 2);
    assert!(again.stderr.contains("--force"));
}

#[test]
fn prove_without_retrieval_needs_no_store() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("m.json");
    std::fs::write(
        &script,
        r#"{"chat": [{"response": "By arithmetic."}, {"response": "theorem t : 1 = 1 :=\nbegin\n  refl,\nend"}],
            "verifier": ["verified"]}"#,
    )
    .unwrap();
    let run = lemmahead(
        dir.path(),
        &[
            "--mock-script",
            s(&script),
            "--store",
            "does_not_exist.lhkb",
            "--set",
            "runs_dir=runs",
            "prove",
            "Show that 1 = 1.",
            "--formal-statement",
            "theorem t : 1 = 1 :=",
            "--variant",
            "basic",
            "--no-rag",
            "--run-id",
            "control",
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let attempt: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/control/inline.json")).unwrap()).unwrap();
    assert_eq!(attempt["use_retrieval"], false);
    assert_eq!(attempt["embedding_call_count"], 0);
    assert!(attempt["iterations"][0]["retrieved"].as_array().unwrap().is_empty());
    let transcript = std::fs::read_to_string(dir.path().join("runs/control/transcript.jsonl")).unwrap();
    assert!(!transcript.contains("\"retrieval\""));
    assert_eq!(transcript.lines().count(), 2);
}

#[test]
fn prove_exit_codes_for_failure_and_infrastructure() {
    let dir = tempfile::tempdir().unwrap();
    let failing = dir.path().join("fail.json");
    std::fs::write(
        &failing,
        r#"{"chat": [{"response": "By arithmetic."}, {"response": "theorem t : 1 = 2 :=\nbegin\n  refl,\nend"}],
            "verifier": [{"status": "failed", "diagnostics": [{"line": 2, "column": 2, "message": "refl failed"}]}]}"#,
    )
    .unwrap();
    let base = [
        "--set",
        "runs_dir=runs",
        "prove",
        "Show that 1 = 2.",
        "--variant",
        "basic",
        "--no-rag",
    ];
    let mut args = vec!["--mock-script", s(&failing)];
    args.extend(base);
    args.extend(["--run-id", "f"]);
    let run = lemmahead(dir.path(), &args);
    assert_eq!(run.code, 1, "{}", run.stderr);
    assert!(run.stdout.contains("Verdict: failed"));
    assert!(run.stdout.contains("refl failed"));

    let exhausted = dir.path().join("empty.json");
    std::fs::write(&exhausted, r#"{"verifier": []}"#).unwrap();
    let mut args = vec!["--mock-script", s(&exhausted)];
    args.extend(base);
    args.extend(["--run-id", "x"]);
    let run = lemmahead(dir.path(), &args);
    assert_eq!(run.code, 4, "{}", run.stderr);
    assert!(run.stderr.contains("pipeline failed"));
}

#[test]
fn prove_unknown_variant_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = lemmahead(dir.path(), &["prove", "Show x.", "--variant", "tree-search"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("tree-search"));
}

fn eval(dir: &Path, extra: &[&str]) -> Run {
    let store = build_store(dir);
    let mut args = vec![
        "--mock-script".to_string(),
        s(&fixture("eval10/mock_basic.json")).to_owned(),
        "--store".into(),
        s(&store).to_owned(),
        "--set".into(),
        "runs_dir=runs".into(),
        "eval".into(),
        s(&fixture("eval10/dataset.jsonl")).to_owned(),
        "--variant".into(),
        "basic".into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    lemmahead(dir, &refs)
}

#[test]
fn eval_ten_problems_prints_forty_percent() {
    let dir = tempfile::tempdir().unwrap();
    let run = eval(dir.path(), &["--run-id", "ten"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(
        run.stdout.contains("| all | basic | n/a | on | 10 | 4 | 40.0% |"),
        "{}",
        run.stdout
    );
    assert!(run.stdout.contains("| validation (cited) | 9.4% |"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/ten/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass_at_1"], 0.4);
    assert_eq!(report["verified_count"], 4);
    assert_eq!(report["status_counts"]["failed"], 6);
    assert!(dir.path().join("runs/ten/report.md").exists());
}

#[test]
fn eval_split_filter_attempts_only_that_split() {
    let dir = tempfile::tempdir().unwrap();
    let run = eval(dir.path(), &["--run-id", "t", "--split", "test"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/t/report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["per_problem"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["test_01", "test_02", "test_03", "test_04"]);
    assert_eq!(report["split"], "test");
    assert!(!dir.path().join("runs/t/val_01.json").exists());
}

#[test]
fn eval_resume_skips_attempted_problems() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(eval(dir.path(), &["--run-id", "r"]).code, 0);
    let refused = eval(dir.path(), &["--run-id", "r"]);
    assert_eq!(refused.code, 2);
    assert!(refused.stderr.contains("--resume"));

    for name in ["test_03", "test_04"] {
        std::fs::remove_file(dir.path().join(format!("runs/r/{name}.json"))).unwrap();
    }
    let kept = std::fs::read_to_string(dir.path().join("runs/r/val_01.json")).unwrap();
    let resumed = eval(dir.path(), &["--run-id", "r", "--resume"]);
    assert_eq!(resumed.code, 0, "{}", resumed.stderr);
    assert!(
        resumed.stdout.contains("skipping 8 attempted problem(s)"),
        "{}",
        resumed.stdout
    );
    assert!(resumed.stdout.contains("val_01"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("runs/r/val_01.json")).unwrap(),
        kept
    );
    assert!(dir.path().join("runs/r/test_04.json").exists());
    assert!(resumed.stdout.contains("| 10 |"));
}

#[test]
fn report_rebuilds_from_persisted_attempts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(eval(dir.path(), &["--run-id", "rep"]).code, 0);
    let run_dir = dir.path().join("runs/rep");
    let original = std::fs::read_to_string(run_dir.join("report.json")).unwrap();
    std::fs::remove_file(run_dir.join("report.json")).unwrap();
    let run = lemmahead(dir.path(), &["report", s(&run_dir)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("40.0%"));
    assert_eq!(std::fs::read_to_string(run_dir.join("report.json")).unwrap(), original);
    assert_eq!(lemmahead(dir.path(), &["report", "nowhere"]).code, 2);
}

#[test]
fn commands_do_not_modify_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = [
        fixture("eval10/dataset.jsonl"),
        fixture("eval10/mock_basic.json"),
        fixture("corpus/three_sections.tex"),
    ];
    let before: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let store = build_store(dir.path());
    let store_before = std::fs::read(&store).unwrap();
    assert_eq!(eval(dir.path(), &["--run-id", "ro"]).code, 0);
    let after: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(std::fs::read(&store).unwrap(), store_before);
}

#[test]
fn config_precedence_and_redaction() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("lemmahead.toml"),
        "chat_model = \"from-file\"\nembed_model = \"embed-file\"\nchat_url = \"http://file\"\nsigma = 3\n",
    )
    .unwrap();
    let run = lemmahead_env(
        dir.path(),
        &["-vv", "--set", "chat_model=from-flag", "--parallelism", "4", "config"],
        &[
            ("LEMMAHEAD_CHAT_MODEL", "from-env"),
            ("LEMMAHEAD_CHAT_URL", "http://env"),
            ("LEMMAHEAD_API_KEY", "sk-do-not-print"),
        ],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("chat_model = \"from-flag\""));
    assert!(run.stdout.contains("chat_url = \"http://env\""));
    assert!(run.stdout.contains("embed_model = \"embed-file\""));
    assert!(run.stdout.contains("sigma = 3"));
    assert!(run.stdout.contains("parallelism = 4"));
    assert!(run.stdout.contains("retrieval_k = 5"));
    assert!(!run.stdout.contains("sk-do-not-print"));
    assert!(!run.stderr.contains("sk-do-not-print"));
    assert!(
        run.stderr.contains("resolved configuration"),
        "debug logging should show the config"
    );

    let bad = lemmahead(dir.path(), &["--set", "sigmaa=2", "config"]);
    assert_eq!(bad.code, 2);
    let missing = lemmahead(dir.path(), &["--config", "nope.toml", "config"]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("nope.toml"));
}

#[test]
fn convert_minif2f_layout() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("informal");
    std::fs::create_dir_all(root.join("valid")).unwrap();
    std::fs::create_dir_all(root.join("test")).unwrap();
    std::fs::write(
        root.join("valid/mathd_algebra_419.json"),
        r#"{"problem_name": "mathd_algebra_419", "informal_statement": "What is the value of $-a-b^2+3ab$ if $a=-1$ and $b=5$? Show that it is -39."}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("test/amc12_2000_p1.json"),
        r#"{"problem_name": "amc12_2000_p1", "informal_statement": "Show it.", "formal_statement": "theorem amc12_2000_p1 : true :="}"#,
    )
    .unwrap();
    let lean = dir.path().join("valid.lean");
    std::fs::write(
        &lean,
        "import data.real.basic\n\ntheorem mathd_algebra_419\n  (a b : ℝ)\n  (h₀ : a = -1)\n  (h₁ : b = 5) :\n  -a - b^2 + 3 * (a * b) = -39 :=\nbegin\n  sorry\nend\n",
    )
    .unwrap();
    let out = dir.path().join("minif2f.jsonl");
    let run = lemmahead(
        dir.path(),
        &["convert-minif2f", s(&root), "--lean", s(&lean), "-o", s(&out)],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("2 problems (1 validation, 1 test)"));
    let problems = lemmahead::evaluation::load_problems(&out, None).unwrap();
    assert_eq!(problems[0].name, "mathd_algebra_419");
    assert!(problems[0].formal_statement.ends_with("= -39 :="));
    assert_eq!(
        lemmahead(dir.path(), &["convert-minif2f", s(&root), "-o", s(&out)]).code,
        2
    );
}
