use std::process::ExitCode;

use clap::Parser;
use ferrosim::cli::{self, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match cli::run(&args) {
        Ok(outcome) => {
            print!("{}", outcome.summary.render());
            if outcome.summary.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(cli::EXIT_EXPECTATION)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
