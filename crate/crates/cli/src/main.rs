use std::process::ExitCode;

use clap::Parser;

use sburgers::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli);
    if let Some(m) = &outcome.manifest {
        eprintln!("run {} ({}), {} files", &m.config_hash[..12], m.command, m.files.len());
    }
    if let Err(e) = &outcome.result {
        eprintln!("{e}");
    }
    outcome.exit_code()
}
