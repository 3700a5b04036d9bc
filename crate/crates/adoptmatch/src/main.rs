use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = adoptmatch::cli::Cli::parse();
    match adoptmatch::cli::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
