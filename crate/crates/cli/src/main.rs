//! `mono3d` — evaluation, codec analysis, and synthetic-data tooling for
//! center-based monocular 3D detection, on KITTI-format files.
//!
//! Exit codes: 0 success, 1 internal error, 2 input/usage error.

mod commands;
mod opts;
mod util;

use std::process::ExitCode;

use clap::Parser;

use opts::Cli;

/// Error carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: missing files, malformed data, invalid parameters.
    Input(String),
    /// Unexpected internal failure.
    Internal(String),
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<mono3d::Error> for CliError {
    fn from(e: mono3d::Error) -> Self {
        // Everything the library reports about user-supplied data is an
        // input error; I/O failures bubble up the same way.
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        // File-system failures here come from user-supplied paths.
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
