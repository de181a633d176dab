use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = segpipe_cli::Cli::parse();
    match segpipe_cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", segpipe_cli::describe(&e));
            ExitCode::from(1)
        }
    }
}
