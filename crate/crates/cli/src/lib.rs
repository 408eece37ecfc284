//! The `gatbind` command-line pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use error::CliError;

/// Parses `argv` and runs the chosen command.
pub fn run<I, T>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Prepare(a) => commands::prepare::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Predict(a) => commands::predict::run(&a),
        Command::Evaluate(a) => commands::evaluate::run(&a),
        Command::Topn(a) => commands::topn::run(&a),
    }
}
