use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = crossview::cli::Cli::parse();
    match crossview::cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
