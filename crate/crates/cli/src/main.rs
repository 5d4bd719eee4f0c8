use std::process::ExitCode;

use clap::Parser;
use pfsl_cli::{execute, Cli, RunConfig};

fn main() -> ExitCode {
    if std::env::args_os().len() == 1 {
        let cfg = RunConfig::default();
        println!("{}", serde_json::to_string_pretty(&cfg).expect("default config serialises"));
        return ExitCode::SUCCESS;
    }
    let cli = Cli::parse();
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg, cli.dry_run) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
