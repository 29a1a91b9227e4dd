use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    svrpo_cli::run(svrpo_cli::Cli::parse())
}
