use std::process::ExitCode;

use clap::Parser;
use dynsbm_cli::args::Cli;

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => dynsbm_cli::run(cli),
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
