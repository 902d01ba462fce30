//! `airway`: phantoms, segmentation, angle extraction and the angle
//! classifier as scriptable subcommands. Every run writes a `.meta.json`
//! sidecar next to its primary output.

mod args;
mod imaging;
mod learning;
mod meta;
mod tables;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Usage errors exit 1, data errors exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<airway_core::Error> for CliError {
    fn from(e: airway_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let recorded = argv[1..].to_vec();
    let result = match cli.command {
        Command::Phantom(a) => imaging::phantom(a, recorded),
        Command::Segment(a) => imaging::segment(a, recorded),
        Command::ExportSlice(a) => imaging::export_slice(a, recorded),
        Command::Extract(a) => imaging::extract(a, recorded),
        Command::Sweep(a) => learning::sweep(a, recorded),
        Command::Search(a) => learning::search(a, recorded),
        Command::Train(a) => learning::train(a, recorded),
        Command::Predict(a) => learning::predict(a, recorded),
        Command::Report(a) => learning::report(a, recorded),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
