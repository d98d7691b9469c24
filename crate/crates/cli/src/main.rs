//! `verba`: command-line front end and local HTTP service.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 provider failure.

mod args;
mod commands;
mod config;
mod serve;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use verba_core::pipeline::PipelineError;

use args::{CapsuleAction, Cli, Command};
use commands::ProviderFailure;

fn exit_code(err: &anyhow::Error) -> u8 {
    let provider = err.chain().any(|e| {
        e.downcast_ref::<PipelineError>()
            .is_some_and(PipelineError::is_provider_failure)
            || e.downcast_ref::<ProviderFailure>().is_some()
    });
    if provider {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Probe(a) => commands::probe(a),
        Command::Elicit(a) => commands::elicit(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ladder(a) => commands::ladder(a),
        Command::Capsule { action } => match action {
            CapsuleAction::Verify { file } => commands::capsule_verify(file),
            CapsuleAction::Replay { file, format } => commands::capsule_replay(file, *format),
        },
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => serve::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
