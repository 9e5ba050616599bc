//! Library side of the `w1ot` command line: run configuration, checkpoint
//! format, SVG plotting and the subcommand implementations. The binary in
//! `main.rs` only parses flags and dispatches here.

use clap::ValueEnum;

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod plot;

/// Command error carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed files, shape mismatches: exit 2.
    Usage(String),
    /// Numerical aborts (NaN losses, singular systems): exit 1.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }

    pub fn usage(m: impl Into<String>) -> Self {
        CliError::Usage(m.into())
    }
}

impl From<w1ot::Error> for CliError {
    fn from(e: w1ot::Error) -> Self {
        match e {
            w1ot::Error::Numerical(m) => CliError::Numerical(format!("numerical failure: {m}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ToyKind {
    Bookshelf,
    Circles,
    SwissRoll,
    Moons,
}
