use std::process::ExitCode;

use clap::Parser;
use zscl_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zscl: {e}");
            ExitCode::from(e.code)
        }
    }
}
