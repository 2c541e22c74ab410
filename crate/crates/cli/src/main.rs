//! `amc`: reproducible runs over the adapted margin cosine loss library.
//!
//! Exit status: 0 success, 1 a verification check failed, 2 usage or input
//! error. Every run records a `run_manifest.json` in its output directory
//! (on stderr when the command has no `--out`).

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use manifest::{unix_ms, RunManifest, RUN_MANIFEST_FILE};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unreadable / invalid input.
    Input(String),
}

impl From<amc_core::Error> for Failure {
    fn from(e: amc_core::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn flags(command: &Command) -> serde_json::Value {
    let v = match command {
        Command::Stats(a) => serde_json::to_value(a),
        Command::Synth(a) => serde_json::to_value(a),
        Command::Train(a) => serde_json::to_value(a),
        Command::Eval(a) => serde_json::to_value(a),
        Command::Sweep(a) => serde_json::to_value(a),
        Command::Gradcheck(a) => serde_json::to_value(a),
        Command::Scalebound(a) => serde_json::to_value(a),
        Command::ExportEmbeddings(a) => serde_json::to_value(a),
    };
    v.unwrap_or(serde_json::Value::Null)
}

fn dispatch(command: &Command) -> Result<commands::Run, Failure> {
    match command {
        Command::Stats(a) => commands::stats(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Scalebound(a) => commands::scalebound(a),
        Command::ExportEmbeddings(a) => commands::export(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = unix_ms();
    let run = match dispatch(&cli.command) {
        Ok(run) => run,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        flags: flags(&cli.command),
        seed: run.seed,
        input_digests: run.digests,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
    };
    match &run.out {
        Some(out) => {
            if let Err(e) = amc_core::io::write_json(&out.join(RUN_MANIFEST_FILE), &manifest) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        None => match serde_json::to_string(&manifest) {
            Ok(json) => eprintln!("{json}"),
            Err(e) => eprintln!("error: cannot encode run manifest: {e}"),
        },
    }
    match run.check {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}
