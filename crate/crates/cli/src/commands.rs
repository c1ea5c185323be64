use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use lemmahead::config::Segmenter;
use lemmahead::corpus_ingest::{
    load_page_images, rasterize_pdf, segment_latex, segment_rule_based, transcribe_pages, IngestError,
};
use lemmahead::evaluation::{
    build_report, convert_minif2f, load_problems, render_markdown, run_evaluation, write_report, EvalError,
    EvalOptions, RunMeta,
};
use lemmahead::knowledge_base::EmbeddingError;
use lemmahead::llm_gateway::{Gateway, Transcript};
use lemmahead::pipelines::{run_attempt, PipelineEnv};
use lemmahead::{Chunk, KnowledgeBase, LatexDocument, PipelineConfig, Problem, ProofAttempt, Split, Variant};

use crate::app::{
    default_run_id, infra, load_store, usage, App, Failure, Outcome, EXIT_EMPTY_STORE, EXIT_FAILED, EXIT_OK,
};
use crate::args::{ConvertArgs, EvalArgs, IngestArgs, PipelineArgs, ProveArgs, QueryArgs, ReportArgs};

const EMBED_BATCH: usize = 32;

/// Input problems exit with the usage code, everything else as infrastructure.
fn classify(input: bool, e: anyhow::Error) -> Failure {
    if input {
        usage(e)
    } else {
        infra(e)
    }
}

fn ingest_is_input_error(e: &IngestError) -> bool {
    matches!(
        e,
        IngestError::Unbalanced { .. } | IngestError::InvalidPages(_) | IngestError::EmptyDocument(_)
    )
}

fn doc_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into())
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

struct Collected {
    documents: Vec<LatexDocument>,
    flagged: Vec<(String, u32)>,
}

fn transcribe_dir(app: &App, gateway: &Gateway, dir: &Path, out: &mut Collected) -> Result<(), Failure> {
    let prompts = app.prompts()?;
    let decoding = &app.config.decoding.transcription;
    let by_doc = load_page_images(dir).map_err(|e| usage(anyhow!(e).context("transcription failed")))?;
    for (doc, pages) in by_doc {
        tracing::info!(document = %doc, pages = pages.len(), "transcribing");
        let t = transcribe_pages(&pages, gateway, &prompts.transcription, decoding).map_err(|e| {
            let input = ingest_is_input_error(&e);
            classify(input, anyhow!(e).context(format!("transcription of `{doc}` failed")))
        })?;
        out.flagged.extend(t.flagged_pages.iter().map(|p| (doc.clone(), *p)));
        out.documents.push(t.document);
    }
    Ok(())
}

fn rasterize(app: &App, gateway: &Gateway, pdf: &Path, out: &mut Collected) -> Result<(), Failure> {
    let scratch = tempfile::tempdir().map_err(infra)?;
    rasterize_pdf(&app.config.rasterizer_cmd, pdf, scratch.path(), &doc_id(pdf))
        .map_err(|e| infra(anyhow!(e).context(format!("rasterizing {} failed", pdf.display()))))?;
    transcribe_dir(app, gateway, scratch.path(), out)
}

fn collect_documents(app: &App, gateway: &Gateway, input: &Path) -> Result<Collected, Failure> {
    let mut out = Collected {
        documents: Vec::new(),
        flagged: Vec::new(),
    };
    let read_tex = |path: &Path| -> Result<LatexDocument, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(usage)?;
        Ok(LatexDocument::native(doc_id(path), text))
    };
    if input.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("cannot list {}", input.display()))
            .map_err(usage)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .collect();
        entries.sort();
        for path in &entries {
            if has_ext(path, "tex") {
                out.documents.push(read_tex(path)?);
            } else if has_ext(path, "pdf") {
                rasterize(app, gateway, path, &mut out)?;
            }
        }
        if entries.iter().any(|p| has_ext(p, "png")) {
            transcribe_dir(app, gateway, input, &mut out)?;
        }
    } else if has_ext(input, "tex") {
        out.documents.push(read_tex(input)?);
    } else if has_ext(input, "pdf") {
        rasterize(app, gateway, input, &mut out)?;
    } else {
        return Err(usage(anyhow!(
            "unsupported input {}: expected a .tex or .pdf file or a directory",
            input.display()
        )));
    }
    if out.documents.is_empty() {
        return Err(usage(anyhow!(
            "no .tex, .pdf or page images found in {}",
            input.display()
        )));
    }
    Ok(out)
}

pub fn ingest(app: &App, args: &IngestArgs) -> Outcome {
    if !args.input.exists() {
        return Err(usage(anyhow!("input path {} does not exist", args.input.display())));
    }
    let output = args.output.clone().unwrap_or_else(|| app.config.store.clone());
    if output.exists() && !args.force {
        return Err(usage(anyhow!(
            "store {} already exists; pass --force to overwrite it",
            output.display()
        )));
    }
    let gateway = app.gateway(None);
    let collected = collect_documents(app, &gateway, &args.input)?;
    let prompts = app.prompts()?;
    let params = app.config.chunk_params();
    let mut chunks: Vec<Chunk> = Vec::new();
    for doc in &collected.documents {
        let segmented = match app.config.segmenter {
            Segmenter::Rules => segment_rule_based(doc, &params),
            Segmenter::Llm => segment_latex(
                doc,
                &gateway,
                &prompts.segmentation,
                &app.config.decoding.segmentation,
                &params,
            )
            .map(|s| s.chunks),
        };
        let doc_chunks = segmented.map_err(|e| {
            let input = ingest_is_input_error(&e);
            classify(
                input,
                anyhow!(e).context(format!("segmentation of `{}` failed", doc.document_id)),
            )
        })?;
        tracing::info!(document = %doc.document_id, chunks = doc_chunks.len(), "segmented");
        chunks.extend(doc_chunks);
    }

    let embedder = app.embedder(None);
    let mut kb = KnowledgeBase::new();
    let count = kb.add_chunks(chunks, &embedder, EMBED_BATCH).map_err(|e| {
        let input = matches!(
            e,
            EmbeddingError::EmptyText | EmbeddingError::TooLong { .. } | EmbeddingError::Store(_)
        );
        classify(input, anyhow!(e).context("embedding failed"))
    })?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))
            .map_err(infra)?;
    }
    kb.save(&output)
        .map_err(|e| infra(anyhow!(e).context("saving the store failed")))?;

    let dimension = kb.dimension().map_or_else(|| "-".to_string(), |d| d.to_string());
    println!(
        "Ingested {} document(s): {count} chunks, dimension {dimension}, embedding model {}",
        collected.documents.len(),
        embedder.model_name()
    );
    if collected.flagged.is_empty() {
        println!("Flagged pages: none");
    } else {
        let list: Vec<String> = collected.flagged.iter().map(|(d, p)| format!("{d} p{p}")).collect();
        println!("Flagged pages: {}", list.join(", "));
    }
    println!("Store: {}", output.display());
    Ok(EXIT_OK)
}

pub fn query(app: &App, args: &QueryArgs) -> Outcome {
    let kb = load_store(&app.config.store)?;
    if kb.is_empty() {
        eprintln!("error: store {} is empty", app.config.store.display());
        return Ok(EXIT_EMPTY_STORE);
    }
    let k = args.k.map_or(app.config.retrieval_k, |k| k as usize);
    let embedder = app.embedder(kb.dimension());
    let vector = embedder.embed_text(&args.text).map_err(|e| {
        let input = matches!(e, EmbeddingError::EmptyText | EmbeddingError::TooLong { .. });
        classify(input, anyhow!(e).context("query embedding failed"))
    })?;
    let hits = kb
        .top_k(&vector, k)
        .map_err(|e| usage(anyhow!(e).context("retrieval failed")))?;
    for (rank, hit) in hits.iter().enumerate() {
        if args.json {
            let line = serde_json::json!({
                "rank": rank + 1,
                "chunk_id": hit.chunk.chunk_id,
                "score": hit.score,
                "kind": hit.chunk.kind.as_str(),
                "title": hit.chunk.title,
            });
            println!("{line}");
            continue;
        }
        let title = hit.chunk.title.as_deref().unwrap_or("untitled");
        println!(
            "{:>2}. {:.4}  {}  [{}] {}",
            rank + 1,
            hit.score,
            hit.chunk.chunk_id,
            hit.chunk.kind.as_str(),
            title
        );
        let flat = hit.chunk.latex.split_whitespace().collect::<Vec<_>>().join(" ");
        let preview: String = flat.chars().take(120).collect();
        println!("    {preview}");
    }
    Ok(EXIT_OK)
}

fn pipeline_config(app: &App, args: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let mut config = app.config.pipeline_config();
    if let Some(v) = args.variant {
        config.variant = v;
    }
    if let Some(s) = args.sigma {
        config.sigma = s;
    }
    if let Some(k) = args.retrieval_k {
        config.retrieval_k = k;
    }
    config.include_verifier_feedback &= !args.no_feedback;
    config.early_exit |= args.early_exit;
    config.use_retrieval = !args.no_rag;
    config.validate().map_err(usage)?;
    Ok(config)
}

fn store_for(app: &App, config: &PipelineConfig) -> Result<KnowledgeBase, Failure> {
    if config.use_retrieval {
        load_store(&app.config.store)
    } else {
        Ok(KnowledgeBase::new())
    }
}

fn describe(config: &PipelineConfig) -> String {
    let mut s = match config.variant {
        Variant::Ipa => format!("ipa (sigma={})", config.sigma),
        other => other.as_str().to_string(),
    };
    if !config.use_retrieval {
        s.push_str(", no retrieval");
    }
    s
}

fn resolve_problem(args: &ProveArgs) -> Result<Problem, Failure> {
    match &args.dataset {
        Some(path) => {
            if !path.exists() {
                return Err(usage(anyhow!("dataset {} does not exist", path.display())));
            }
            let problems =
                load_problems(path, None).map_err(|e| usage(anyhow!(e).context("loading the dataset failed")))?;
            problems
                .into_iter()
                .find(|p| p.name == args.problem)
                .ok_or_else(|| usage(anyhow!("problem `{}` is not in {}", args.problem, path.display())))
        }
        None => {
            if args.problem.trim().is_empty() {
                return Err(usage(anyhow!("the inline statement is empty")));
            }
            Ok(Problem {
                name: args.name.clone(),
                split: Split::Validation,
                informal_statement: args.problem.clone(),
                formal_statement: args.formal_statement.clone(),
            })
        }
    }
}

pub fn prove(app: &App, args: &ProveArgs) -> Outcome {
    let problem = resolve_problem(args)?;
    let config = pipeline_config(app, &args.pipeline)?;
    let store = store_for(app, &config)?;
    let run_id = args.pipeline.run_id.clone().unwrap_or_else(|| default_run_id("prove"));
    let run_dir = app.config.runs_dir.join(&run_id);
    let attempt_path = ProofAttempt::path_in(&run_dir, &problem.name);
    let transcript_path = run_dir.join("transcript.jsonl");
    if attempt_path.exists() {
        if !args.force {
            return Err(usage(anyhow!(
                "{} already exists; pass --force or choose another --run-id",
                attempt_path.display()
            )));
        }
        let _ = std::fs::remove_file(&transcript_path);
    }
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("cannot create {}", run_dir.display()))
        .map_err(infra)?;
    let transcript = Transcript::with_sink(&transcript_path)
        .with_context(|| format!("cannot open {}", transcript_path.display()))
        .map_err(infra)?;

    let gateway = app.gateway(Some(transcript));
    let prompts = app.prompts()?;
    let embedder = app.embedder(store.dimension());
    let verifier = app.verifier();
    let env = PipelineEnv {
        gateway: &gateway,
        prompts: &prompts,
        store: &store,
        embedder: &embedder,
        verifier: verifier.as_ref(),
        run_id: &run_id,
    };
    let attempt = run_attempt(&problem, &config, &env).map_err(|e| infra(anyhow!(e).context("pipeline failed")))?;
    let saved = attempt
        .save(&run_dir)
        .with_context(|| format!("cannot write the attempt under {}", run_dir.display()))
        .map_err(infra)?;

    println!("Problem: {}", attempt.problem);
    println!("Variant: {}", describe(&config));
    println!("Iterations: {}", attempt.iterations.len());
    println!("LLM calls: {}", attempt.llm_call_count);
    println!("Verdict: {}", attempt.final_verdict.status);
    for d in attempt.final_verdict.diagnostics.iter().take(5) {
        println!("  line {}, column {}: {}", d.line, d.column, d.message);
    }
    println!("Trace: {}", saved.display());
    Ok(if attempt.final_verdict.is_verified() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn eval_failure(e: EvalError) -> Failure {
    let input = matches!(
        e,
        EvalError::Parse { .. }
            | EvalError::MissingField { .. }
            | EvalError::UnknownSplit { .. }
            | EvalError::DuplicateName { .. }
            | EvalError::EmptyStatement { .. }
            | EvalError::RunExists(_)
            | EvalError::MissingAttempt(_)
    );
    classify(input, anyhow!(e).context("evaluation failed"))
}

pub fn eval(app: &App, args: &EvalArgs) -> Outcome {
    if !args.dataset.exists() {
        return Err(usage(anyhow!("dataset {} does not exist", args.dataset.display())));
    }
    let problems = load_problems(&args.dataset, args.split).map_err(eval_failure)?;
    if problems.is_empty() {
        return Err(usage(anyhow!("no problems selected from {}", args.dataset.display())));
    }
    let config = pipeline_config(app, &args.pipeline)?;
    let store = store_for(app, &config)?;
    let run_id = args.pipeline.run_id.clone().unwrap_or_else(|| default_run_id("eval"));
    let run_dir = app.config.runs_dir.join(&run_id);
    if !args.resume && run_dir.join("run.json").exists() {
        return Err(usage(anyhow!(
            "run directory {} already exists; pass --resume to continue it",
            run_dir.display()
        )));
    }
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("cannot create {}", run_dir.display()))
        .map_err(infra)?;
    let transcript_path = run_dir.join("transcript.jsonl");
    let transcript = Transcript::with_sink(&transcript_path)
        .with_context(|| format!("cannot open {}", transcript_path.display()))
        .map_err(infra)?;

    let gateway = app.gateway(Some(transcript));
    let prompts = app.prompts()?;
    let embedder = app.embedder(store.dimension());
    let verifier = app.verifier();
    let env = PipelineEnv {
        gateway: &gateway,
        prompts: &prompts,
        store: &store,
        embedder: &embedder,
        verifier: verifier.as_ref(),
        run_id: &run_id,
    };
    let options = EvalOptions {
        parallelism: app.config.parallelism,
        resume: args.resume,
        split: args.split,
    };
    if args.resume {
        let done: Vec<&str> = problems
            .iter()
            .filter(|p| ProofAttempt::path_in(&run_dir, &p.name).exists())
            .map(|p| p.name.as_str())
            .collect();
        if !done.is_empty() {
            println!(
                "Resuming {run_id}: skipping {} attempted problem(s): {}",
                done.len(),
                done.join(", ")
            );
        }
    }
    tracing::info!(problems = problems.len(), variant = %describe(&config), "evaluating");
    let report = run_evaluation(&problems, &config, &env, &run_dir, &options).map_err(eval_failure)?;
    print!("{}", render_markdown(&report));
    println!("\nReport: {}", run_dir.join("report.json").display());
    Ok(EXIT_OK)
}

pub fn report(_app: &App, args: &ReportArgs) -> Outcome {
    if !args.run_dir.join("run.json").exists() {
        return Err(usage(anyhow!(
            "{} is not a run directory (no run.json)",
            args.run_dir.display()
        )));
    }
    let meta = RunMeta::load(&args.run_dir).map_err(eval_failure)?;
    let report = build_report(&meta, &args.run_dir).map_err(eval_failure)?;
    write_report(&report, &args.run_dir).map_err(eval_failure)?;
    print!("{}", render_markdown(&report));
    Ok(EXIT_OK)
}

pub fn convert(args: &ConvertArgs) -> Outcome {
    if !args.informal_root.is_dir() {
        return Err(usage(anyhow!("{} is not a directory", args.informal_root.display())));
    }
    if args.output.exists() && !args.force {
        return Err(usage(anyhow!(
            "{} already exists; pass --force to overwrite it",
            args.output.display()
        )));
    }
    let lean: Vec<&Path> = args.lean.iter().map(PathBuf::as_path).collect();
    let problems =
        convert_minif2f(&args.informal_root, &lean).map_err(|e| usage(anyhow!(e).context("conversion failed")))?;
    let mut out = String::new();
    for p in &problems {
        let line = serde_json::json!({
            "name": p.name,
            "split": p.split.as_str(),
            "informal_statement": p.informal_statement,
            "formal_statement": p.formal_statement,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(&args.output, out)
        .with_context(|| format!("cannot write {}", args.output.display()))
        .map_err(infra)?;
    let valid = problems.iter().filter(|p| p.split == Split::Validation).count();
    println!(
        "Wrote {} problems ({valid} validation, {} test) to {}",
        problems.len(),
        problems.len() - valid,
        args.output.display()
    );
    Ok(EXIT_OK)
}
