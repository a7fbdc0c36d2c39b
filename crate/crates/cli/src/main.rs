use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = peg_cli::Cli::parse();
    match peg_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("peg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
