mod cli;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::FromArgMatches;

use crate::cli::{Cli, Command};

/// A mistake in how the tool was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse() -> Result<Cli, clap::Error> {
    let argv = config::merge_config(std::env::args_os().collect())?;
    let matches = cli::command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn threads(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Epsilon(a) => a.common.threads,
        Command::SolveSigma(a) => a.common.threads,
        Command::Family(a) => a.common.threads,
        Command::TailWeight(a) => a.common.threads,
        Command::SimulateArgmax(a) => a.common.threads,
        Command::PateLabel(a) => a.common.threads,
        Command::Train(a) => a.common.threads,
        Command::Sample(a) => a.common.threads,
        Command::Replay(a) => a.threads,
    }
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = threads(&cli.command) {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let name = cli.command.name();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ggdp {name}: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
