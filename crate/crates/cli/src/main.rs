mod artifacts;
mod config;
mod experiments;
mod summarize;

use clap::{Parser, Subcommand};
use config::{Config, LoadError};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Exact and Monte Carlo experiments for non-gradient exclusion processes.
#[derive(Parser)]
#[command(name = "kawasaki", version)]
struct Cli {
    /// Worker threads for Monte Carlo replicas (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Artifact directory; overrides `output.dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Print a report of an artifact directory.
    Summarize { dir: PathBuf },
}

const PASS: u8 = 0;
const ASSERTION: u8 = 1;
const PARSE: u8 = 2;
const VALIDATION: u8 = 3;

/// One machine-readable line on stderr, then a readable one.
fn fail(code: u8, report: serde_json::Value, human: String) -> ExitCode {
    eprintln!("{report}");
    eprintln!("error: {human}");
    ExitCode::from(code)
}

fn run(cli: &Cli, path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            return fail(PARSE, json!({"error": "parse", "message": e.to_string()}), format!("{}: {e}", path.display()))
        }
    };
    let config = match Config::parse(&text) {
        Ok(c) => c,
        Err(LoadError::Parse { line, column, message }) => {
            return fail(
                PARSE,
                json!({"error": "parse", "line": line, "column": column, "message": message}),
                format!("{}:{line}:{column}: {message}", path.display()),
            )
        }
        Err(LoadError::Validation { line, column, message }) => {
            let at = line.map_or(String::new(), |l| format!(":{l}:{}", column.unwrap_or(1)));
            return fail(
                VALIDATION,
                json!({"error": "validation", "line": line, "column": column, "message": message}),
                format!("{}{at}: {message}", path.display()),
            );
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("artifacts"));
    let kind = serde_json::to_value(config.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    log::info!("running {kind} into {}", dir.display());
    let sink = match experiments::run(&config) {
        Ok(s) => s,
        Err(e) => {
            // Non-convergence is a failed numerical assertion; anything else
            // the library refuses is an invalid request.
            let code = match e.downcast_ref::<kawasaki_core::Error>() {
                Some(kawasaki_core::Error::Solver { .. }) => ASSERTION,
                _ => VALIDATION,
            };
            let class = if code == ASSERTION { "assertion" } else { "validation" };
            return fail(code, json!({"error": class, "message": format!("{e:#}")}), format!("{e:#}"));
        }
    };
    match sink.flush(&kind, &dir) {
        Ok(m) if m.pass => {
            println!("{kind}: PASS ({} invariants) -> {}", m.invariants.len(), dir.display());
            ExitCode::from(PASS)
        }
        Ok(m) => {
            let failed: Vec<_> = m.invariants.iter().filter(|i| !i.pass).collect();
            let names: Vec<&str> = failed.iter().map(|i| i.name.as_str()).collect();
            fail(
                ASSERTION,
                json!({"error": "assertion", "failed": failed, "report": dir.join(artifacts::FAILURES)}),
                format!("{kind}: FAIL ({})", names.join(", ")),
            )
        }
        Err(e) => fail(VALIDATION, json!({"error": "output", "message": format!("{e:#}")}), format!("{e:#}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return fail(VALIDATION, json!({"error": "validation", "message": "--jobs must be positive"}), "--jobs must be positive".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return fail(VALIDATION, json!({"error": "validation", "message": e.to_string()}), e.to_string());
        }
    }
    match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Summarize { dir } => match summarize::summarize(dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::from(PASS)
            }
            Err(e) => fail(VALIDATION, json!({"error": "summarize", "message": format!("{e:#}")}), format!("{e:#}")),
        },
    }
}
