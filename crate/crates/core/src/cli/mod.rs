//! The `sts` command line: `prepare`, `train`, `convert`, `evaluate` and
//! `plot`.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 partial failure (some records or examples failed).

mod convert;
mod evaluate;
mod features;
mod plot;
mod prepare;
mod train;

use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use convert::{cmd_convert, ConvertArgs, Vocoder};
pub use evaluate::{cmd_evaluate, EvaluateArgs};
pub use features::{load_features, FeatureSet, ENTRY_FILE, FEATURES_DSP_FILE};
pub use plot::{cmd_plot, render_spectrograms, PlotArgs};
pub use prepare::{cmd_prepare, PrepareArgs, PrepareSummary};
pub use train::{cmd_train, TrainArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

/// How a command that did not error finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::Partial => EXIT_PARTIAL,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Validation(_) | Error::Parse { .. } | Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sts", version, about = "Speech-to-singing conversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract features from a manifest into a cache directory.
    Prepare(PrepareArgs),
    /// Train on prepared features.
    Train(TrainArgs),
    /// Turn a speech recording into singing.
    Convert(ConvertArgs),
    /// Score a checkpoint on a paired manifest.
    Evaluate(EvaluateArgs),
    /// Render spectrograms to PNG.
    Plot(PlotArgs),
}

/// Runs one parsed command line. `stop` is polled during training.
pub fn run(cli: Cli, stop: &AtomicBool) -> i32 {
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(&a).map(|s| s.status()),
        Command::Train(a) => cmd_train(&a, Some(stop)),
        Command::Convert(a) => cmd_convert(&a).map(|_| Status::Ok),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Plot(a) => cmd_plot(&a).map(|_| Status::Ok),
    };
    match result {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

/// Routes SIGINT to a flag that training polls between steps.
pub fn install_sigint_handler() -> &'static AtomicBool {
    let handler: extern "C" fn(libc::c_int) = on_sigint;
    // SAFETY: the handler only stores to an atomic, which is async-signal-safe.
    unsafe {
        libc::signal(libc::SIGINT, handler as libc::sighandler_t);
    }
    &STOP
}

/// Entry point of the `sts` binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    run(cli, install_sigint_handler())
}
