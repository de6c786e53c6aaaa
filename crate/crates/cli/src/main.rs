mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use wacm_core::ErrorKind;

use args::{Cli, Command};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<wacm_core::Error>() {
            return match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dwt(a) => commands::dwt(a),
        Command::Idwt(a) => commands::idwt(a),
        Command::MakeDataset(a) => commands::make_dataset(a),
        Command::TrainScore(a) => commands::train_score(a),
        Command::Sample(a) => commands::sample(a),
        Command::Colorize(a) => commands::colorize(a),
        Command::Metrics(a) => commands::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
