//! Entry point: parse arguments, dispatch, and map failures to exit codes.
//!
//! Exit status is 0 on success, 1 for invalid flags or configuration, and 2
//! for numerical conditions hit while running (budget exhaustion, estimation
//! failure, divergence). Every failure prints a single `ERR:`-prefixed
//! message on stderr; `--help` and `--version` print to stdout and succeed.

mod cli;
mod run;

use clap::Parser;

fn main() {
    let parsed = match cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("ERR: {e}");
                std::process::exit(1);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    if let Err(e) = run::dispatch(&parsed) {
        eprintln!("ERR: {e}");
        std::process::exit(if e.is_validation() { 1 } else { 2 });
    }
}
