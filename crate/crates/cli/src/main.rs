use std::process::ExitCode;

use clap::Parser;
use portsim_cli::{execute, Cli, CliError};
use portsim_core::ScenarioError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::Scenario(ScenarioError::Invalid(violations)) = &e {
                eprintln!("scenario is invalid ({} problems):", violations.len());
                for v in violations {
                    eprintln!("  {v}");
                }
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
