use std::process::ExitCode;

use clap::Parser;

use critdrift_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            if let Some(dir) = &outcome.output_dir {
                eprintln!(
                    "{}: artifacts in {}",
                    if outcome.passed { "PASS" } else { "FAIL" },
                    dir.display()
                );
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
