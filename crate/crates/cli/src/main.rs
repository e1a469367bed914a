//! `sufficient`: command-line front end for sufficient explanations and
//! sufficient rules on random forests.

mod args;
mod artifact;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use artifact::CliError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).target(env_logger::Target::Stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::new("invalid_param", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::new("threads", e.to_string()))?;
    }
    let ctx = artifact::Context::new(&cli);
    match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Explain(a) => commands::explain(&ctx, a),
        Command::Rule(a) => commands::rule(&ctx, a),
        Command::GlobalSr(a) => commands::global_sr(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::OracleCheck(a) => commands::oracle_check(&ctx, a),
    }
}
