mod args;
mod commands;
mod config;
mod error;
mod inputs;
mod report;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<_> = std::env::args_os().collect();
    let outcome = config::merge_config_file(argv).and_then(|argv| {
        let cli = Cli::try_parse_from(argv).map_err(CliError::Usage)?;
        commands::run(cli)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) if !e.use_stderr() => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("interspec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
