use std::process::ExitCode;

use clap::Parser;

use scns_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            println!("{}", report.line);
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("scns {}: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
