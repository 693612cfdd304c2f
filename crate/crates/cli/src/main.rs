use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;
mod error;
mod report;

use commands::{Command, Output};
use config::{Format, RunConfig};
use error::{CliError, CliResult, EXIT_FAILED_CHECKS, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "dyson",
    version,
    about = "Jack polynomials, Dixon-Anderson kernels and beta-Dyson dynamics, with exact and Monte Carlo intertwining checks"
)]
struct Cli {
    /// JSON config file; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Same as --format json
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Same as --format csv
    #[arg(long, global = true)]
    csv: bool,
    /// Record the wall-clock time in report metadata
    #[arg(long, global = true)]
    timestamp: bool,
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = cli.run.clone();
    if cli.json {
        cfg.format = Some(Format::Json);
    } else if cli.csv {
        cfg.format = Some(Format::Csv);
    }
    if let Some(path) = &cli.config {
        cfg = cfg.merge_over(RunConfig::load(path)?);
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<i32> {
    let cfg = resolve(cli)?;
    let output = commands::run(&cli.command, &cfg)?;
    let (text, code) = match output {
        Output::Report(mut report) => {
            if cli.timestamp {
                let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                report.metadata.timestamp = Some(now);
            }
            let code = if report.passed { 0 } else { EXIT_FAILED_CHECKS };
            let text = match cfg.format() {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            (text, code)
        }
        Output::Data { json, table } => {
            let text = match cfg.format() {
                Format::Json => serde_json::to_string_pretty(&json)? + "\n",
                Format::Csv => table.to_csv(),
            };
            (text, 0)
        }
    };
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
