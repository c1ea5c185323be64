use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lemmahead::{Split, Variant};

#[derive(Debug, Parser)]
#[command(name = "lemmahead", version, about = "Retrieval-augmented Lean proof generation")]
pub struct Cli {
    /// Config file (default: ./lemmahead.toml when present).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Use scripted chat, embedding and verifier mocks from this JSON file.
    #[arg(long, global = true, value_name = "PATH")]
    pub mock_script: Option<PathBuf>,

    /// Knowledge-base file (`store` config key).
    #[arg(long, global = true, value_name = "PATH")]
    pub store: Option<PathBuf>,

    /// Concurrent problems during evaluation (`parallelism` config key).
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,

    /// Override any config key, e.g. `--set decoding.keywords.temperature=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// More log output (repeatable). `RUST_LOG` takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a knowledge base from .tex files, page images or PDFs.
    Ingest(IngestArgs),
    /// Print the chunks most similar to a query.
    Query(QueryArgs),
    /// Run one pipeline attempt on a single problem.
    Prove(ProveArgs),
    /// Evaluate a dataset and write a Pass@1 report.
    Eval(EvalArgs),
    /// Rebuild the report of an existing run directory.
    Report(ReportArgs),
    /// Convert a MiniF2F checkout into a JSON Lines dataset.
    #[command(name = "convert-minif2f")]
    ConvertMinif2f(ConvertArgs),
    /// Print the resolved configuration (secrets redacted).
    Config,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A .tex or .pdf file, or a directory of them and `<doc>_p<N>.png` page images.
    pub input: PathBuf,
    /// Output store (default: the configured store).
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Replace an existing store.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub text: String,
    /// Number of chunks (default: `retrieval_k`).
    #[arg(short, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Print one JSON object per hit instead of the text listing.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// basic, eqg or ipa.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// IPA iterations.
    #[arg(long)]
    pub sigma: Option<usize>,
    /// Chunks retrieved per query.
    #[arg(short = 'k', long = "retrieval-k")]
    pub retrieval_k: Option<usize>,
    /// Control run: skip retrieval entirely.
    #[arg(long)]
    pub no_rag: bool,
    /// Do not feed verifier diagnostics into later IPA iterations.
    #[arg(long)]
    pub no_feedback: bool,
    /// Stop IPA at the first verified iteration.
    #[arg(long)]
    pub early_exit: bool,
    /// Run identifier; outputs go to `<runs_dir>/<run_id>/`.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProveArgs {
    /// Problem name (with --dataset) or an inline informal statement.
    pub problem: String,
    /// Look the problem up by name in this dataset.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Name for an inline problem.
    #[arg(long, default_value = "inline")]
    pub name: String,
    /// Lean theorem header for an inline problem.
    #[arg(long, default_value = "")]
    pub formal_statement: String,
    /// Overwrite an existing attempt for this problem and run id.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON Lines dataset.
    pub dataset: PathBuf,
    /// validation or test (default: both).
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Continue a run, skipping problems that already have an attempt.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing run.json and the attempt files.
    pub run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Directory with `valid/` and `test/` JSON problem files.
    pub informal_root: PathBuf,
    /// Lean sources providing theorem headers missing from the JSON files.
    #[arg(long = "lean", value_name = "PATH")]
    pub lean: Vec<PathBuf>,
    #[arg(short, long, value_name = "PATH")]
    pub output: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant `{s}` (expected basic, eqg or ipa)"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (expected validation or test)"))
}
