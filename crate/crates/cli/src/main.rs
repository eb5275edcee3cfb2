//! `fragvqa`: corpus synthesis, fragment inspection, training, scoring,
//! quality maps, stability and cost reports.
//!
//! Every command resolves its configuration from defaults, an optional
//! `--config` file and flags (in that order), prints the effective config
//! with its hash on stderr and stores it under `--out` when there is one.
//! Failures print `{"error":{"class":..,"message":..}}` on stderr and exit
//! with 2 for invocation problems, 1 otherwise.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(name = "fragvqa", version, about = "Fragment-based no-reference video quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "class": e.class(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
