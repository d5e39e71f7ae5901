//! `vbless`: command-line access to principals, blessings and services.

mod args;
mod cmd;
mod context;

use args::{Cli, Command};
use clap::Parser;
use context::{Context, UsageError};
use std::process::ExitCode;
use tracing_subscriber::EnvFilter;

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Context::new(&cli);
    match cli.command {
        Command::Principal(c) => cmd::credentials::principal(&ctx, c),
        Command::Bless(a) => cmd::credentials::bless_cmd(&ctx, a),
        Command::Store(c) => cmd::credentials::store(&ctx, c),
        Command::Roots(c) => cmd::credentials::roots(&ctx, c),
        Command::Discharge(c) => cmd::services::discharge(&ctx, c),
        Command::Group(c) => cmd::services::group(&ctx, c),
        Command::Lock(c) => cmd::lock::lock(&ctx, c),
        Command::Serve(a) => cmd::services::serve(&ctx, a),
        Command::Call(a) => cmd::services::call(&ctx, a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vbless: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
