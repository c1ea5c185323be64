//! `lemmahead` command-line driver.
//!
//! Exit codes: 0 success (or verified proof), 1 proof not verified,
//! 2 usage or input error, 3 empty store, 4 infrastructure failure.

mod app;
mod args;
mod commands;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;
use lemmahead::config::{AppConfig, ConfigSources};
use tracing_subscriber::EnvFilter;

use app::{usage, App, Outcome};
use args::{Cli, Command};

fn init_tracing(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .init();
}

fn resolve_config(cli: &Cli) -> Result<AppConfig, app::Failure> {
    let mut sources = ConfigSources::from_process_env();
    sources.file = cli.config.clone();
    if let Some(store) = &cli.store {
        sources.set_value("store", store.to_string_lossy().into_owned());
    }
    if let Some(n) = cli.parallelism {
        sources.set_value("parallelism", n as i64);
    }
    for assignment in &cli.overrides {
        sources.set(assignment).map_err(usage)?;
    }
    AppConfig::resolve(&sources).map_err(usage)
}

fn run(cli: &Cli) -> Outcome {
    let config = resolve_config(cli)?;
    tracing::debug!(?config, "resolved configuration");
    if let Command::Config = cli.command {
        print!("{}", config.to_redacted_toml());
        return Ok(app::EXIT_OK);
    }
    if let Command::ConvertMinif2f(args) = &cli.command {
        return commands::convert(args);
    }
    let app = App::new(config, cli.mock_script.as_deref())?;
    match &cli.command {
        Command::Ingest(args) => commands::ingest(&app, args),
        Command::Query(args) => commands::query(&app, args),
        Command::Prove(args) => commands::prove(&app, args),
        Command::Eval(args) => commands::eval(&app, args),
        Command::Report(args) => commands::report(&app, args),
        Command::Config | Command::ConvertMinif2f(_) => unreachable!("handled above"),
    }
}

/// Exit quietly when stdout is closed early, e.g. by `| head`.
#[cfg(unix)]
fn reset_sigpipe() {
    // SAFETY: restoring the default disposition of a signal has no preconditions.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    init_tracing(cli.verbose);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
