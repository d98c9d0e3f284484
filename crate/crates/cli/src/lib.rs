//! The `qsat` command line: corpus generation, annotation, training,
//! evaluation and scoring.
//!
//! Every command writes its artifacts and a `manifest.json` into `--out`.
//! Settings resolve as command-line flag, then `--config` file (flat TOML,
//! keys named like the long flags with `_` for `-`), then built-in default.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical abort.

mod args;
mod commands;
mod config;
mod manifest;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::FileConfig;
pub use manifest::{Artifact, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A usage problem detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Maps an error chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<qsat::Error>() {
            return match e {
                qsat::Error::NumericalAbort(_) => EXIT_NUMERICAL,
                qsat::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}
