//! `kpzlab` command-line tool.
//!
//! Exit codes: 0 success, 1 a verification failed or an I/O error, 2 invalid
//! input, 3 a verification was inconclusive.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use commands::{Ctx, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] kpzlab::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Core(kpzlab::Error::Io(_)) => 1,
            _ => 2,
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Ctx {
        json: cli.json,
        run: json!({
            "tool": "kpzlab",
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(&cli.command)?,
        }),
    };
    match &cli.command {
        Command::Rate(a) => commands::rate(&ctx, a),
        Command::Lyapunov(a) => commands::lyapunov_cmd(&ctx, a),
        Command::GEstimate(a) => commands::g_estimate_cmd(&ctx, a),
        Command::VerifyHyp(a) => commands::verify_hyp(&ctx, a),
        Command::Simulate(a) => commands::simulate_cmd(&ctx, a),
        Command::Oracle(a) => commands::oracle_cmd(&ctx, a),
        Command::LdpToy(a) => commands::ldp_toy(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Ok(Outcome::Inconclusive) => ExitCode::from(3),
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
