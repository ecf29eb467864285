use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use nl2bi::cli::{one_shot, serve, Cli, Command};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(args) => match serve(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::OneShot(args) => {
            let out = one_shot(&args);
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", out.stdout);
            if !out.stderr.is_empty() {
                eprintln!("{}", out.stderr);
            }
            ExitCode::from(out.code as u8)
        }
    }
}
