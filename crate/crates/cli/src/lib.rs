//! Command-line harness for the `dynsbm` library.
//!
//! Exit codes are stable across commands: 0 on success or a satisfied
//! verdict, 1 on a failed verdict or a violated recovery hypothesis, 2 on
//! usage and I/O errors.

pub mod args;
pub mod commands;
pub mod report;
pub mod svg;

use std::process::ExitCode;

use args::Cli;

/// How a command that ran to completion ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerdictFailed,
}

pub fn exit_code(result: &anyhow::Result<Outcome>) -> u8 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::VerdictFailed) => 1,
        Err(e) => match e.downcast_ref::<dynsbm::Error>() {
            Some(dynsbm::Error::HypothesisViolated(_)) => 1,
            _ => 2,
        },
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Runs a parsed command line and reports errors on stderr.
pub fn run(cli: Cli) -> ExitCode {
    init_logging(cli.global.verbose);
    let result = commands::dispatch(cli);
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(exit_code(&result))
}
