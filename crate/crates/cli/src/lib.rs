//! Command-line front end: dataset generation, training, probing,
//! attribution, pruning and layer sweeps, and report emission.
//!
//! Exit codes: 0 success, 1 I/O error, 2 usage error, 3 validation error.
//! Failures print one JSON object on stderr.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod run;

use std::ffi::OsString;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;

use args::{Cli, Command};
pub use error::{CliError, CliResult, ErrorKind};

/// Worker-thread count for the global pool.
pub const WORKERS_ENV: &str = "LINKPROBE_WORKERS";

fn configure_workers() -> CliResult<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.to_string().trim_end())),
    };
    configure_workers()?;
    dispatch(&cli.command)
}

pub fn dispatch(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::ProbeMaw(a) => commands::probe(a, false),
        Command::ProbeMac(a) => commands::probe(a, true),
        Command::Attribute(a) => commands::attribute(a),
        Command::PruneSweep(a) => commands::prune_sweep(a),
        Command::LayerSweep(a) => commands::layer_sweep(a),
        Command::Report(a) => commands::report(a),
    }
}
