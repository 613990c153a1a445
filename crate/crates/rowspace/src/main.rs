use std::process::ExitCode;

use clap::Parser;
use rowspace::{run_experiment, Cli, ExperimentConfig, HarnessError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(HarnessError::Config(String::new()).exit_code() as u8);
        }
    };
    match ExperimentConfig::from_cli(cli).and_then(|cfg| run_experiment(&cfg)) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rowspace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
