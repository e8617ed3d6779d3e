mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use taxkd::Exec;

use cli::{Cli, Command};

/// A user-correctable problem: bad flag value, unreadable input, bad config.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<Invalid>() || e.downcast_ref::<taxkd::Error>().is_some_and(taxkd::Error::is_validation)
    })
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn exec_for(threads: usize) -> anyhow::Result<Exec> {
    if threads == 1 {
        return Ok(Exec::Sequential);
    }
    if threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(Exec::default())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let exec = exec_for(cli.threads)?;
    match &cli.command {
        Command::Kernel(a) => commands::kernel(a),
        Command::Featurize(a) => commands::featurize(a, exec),
        Command::Embed(a) => commands::embed(a, exec),
        Command::Train(a) => commands::train(a, exec),
        Command::Predict(a) => commands::predict_cmd(a, exec),
        Command::Eval(a) => commands::eval(a),
        Command::Transitions(a) => commands::transitions_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            if is_validation(&e) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
