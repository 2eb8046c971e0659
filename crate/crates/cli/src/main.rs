//! `forumstrat` command-line driver.
//!
//! Exit status is 0 on success, 2 when input fails validation (bad flags,
//! unknown classes, infeasible sample sizes) and 3 when data cannot be
//! processed (malformed corpora, missing files, exhausted bins).

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use forumstrat::pipeline::PipelineError;
use forumstrat_annotate::ServiceError;

use crate::args::Cli;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<forumstrat::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return if e.source.is_validation() { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<ServiceError>() {
            return match e {
                ServiceError::Validation(_) => 2,
                ServiceError::Core(c) if c.is_validation() => 2,
                _ => 3,
            };
        }
        if cause.downcast_ref::<commands::Invalid>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their sources in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
