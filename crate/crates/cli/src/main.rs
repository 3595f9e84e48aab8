//! `hemm`: key management, tensor encryption, encrypted inference, the
//! client service, trace simulation and reports.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use hemm_core::Error;

/// Process exit status for each failure class.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Params(_) | Error::Insecure { .. } | Error::Config(_) | Error::ContextMismatch(_) => 2,
        Error::Io(_) => 3,
        Error::Protocol { .. } => 4,
        Error::LevelExhausted(_) | Error::ScaleOverflow { .. } => 5,
        Error::Format(_) | Error::Json(_) | Error::Trace(_) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
