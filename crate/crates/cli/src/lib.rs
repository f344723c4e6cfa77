//! Command-line front end for the keystroke verification benchmark.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};
use error::{CliResult, EXIT_USAGE};
use manifest::RunManifest;

pub fn execute(command: Command) -> CliResult<RunManifest> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Features(a) => commands::features(a),
        Command::Protocol(a) => commands::protocol(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
        Command::Pipeline(a) => commands::pipeline(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
