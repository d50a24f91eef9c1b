use std::process::ExitCode;

use clap::Parser;

use ymh_cli::driver::{execute, Cli};

fn main() -> ExitCode {
    ExitCode::from(execute(&Cli::parse()))
}
