use std::error::Error as _;
use std::process::ExitCode;

use clap::Parser;

use mrag::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::execute(&args) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::from(outcome.status as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = err.source();
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
