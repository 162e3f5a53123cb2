//! `eru` - pipeline driver for embodied reference understanding runs.
//!
//! Subcommands: `gen-heatmaps`, `ensemble`, `evaluate`, `loss-check`,
//! `report`. Set `ERU_LOG` (error, warn, info, debug, trace) to control log
//! verbosity. Exit codes: 0 success, 1 validation failure, 2 I/O failure.

use std::process::ExitCode;

use clap::Parser;

mod commands;
mod exit;

use commands::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERU_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit::code_for(&err)
        }
    }
}
