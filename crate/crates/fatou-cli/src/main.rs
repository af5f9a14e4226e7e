//! Single-binary experiment runner: `solve` builds the conjugating sequences
//! and writes artifacts, `diagnose` measures convergence and surjectivity
//! over them, `check` re-runs the cross-module invariant suites, and `render`
//! draws basin slices. Every failure exits with a stage-specific code and a
//! machine-readable JSON error on stderr.

mod artifacts;
mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fatou",
    version,
    about = "Conjugating-sequence toolkit: solve, diagnose, check, render",
    long_about = "Pipeline runner for attracting polynomial automorphism sequences: \
                  generates families, normalizes them, solves for the conjugating \
                  polynomial sequences, and measures the convergence of the induced \
                  basin biholomorphisms. Configuration defaults are documented in the \
                  project README."
)]
struct Cli {
    /// Worker threads for data-parallel stages (0 or unset: all cores).
    #[arg(long, global = true, env = "FATOU_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (generate → normalize → solve → extend) and write artifacts.
    Solve {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence, surjectivity, and basin-slice diagnostics over solve artifacts.
    Diagnose {
        /// The configuration the artifacts were produced from.
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory written by `solve`.
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Run the cross-module invariant suites (all, or one by name).
    Check {
        /// Restrict to one suite: jet_core, oracle, or growth.
        #[arg(long)]
        suite: Option<String>,
        /// Also verify the integrity (hashes) of an artifact directory.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Render a basin slice from solve artifacts with a custom window.
    Render {
        /// Artifact directory written by `solve`.
        #[arg(long)]
        artifacts: PathBuf,
        /// Slice window `x0,x1,y0,y1` (real parts along the two axes); the
        /// rendered square covers the window's square hull.
        #[arg(long)]
        window: String,
        /// Pixels per side.
        #[arg(long)]
        px: usize,
        /// Coordinate axes of the slice plane.
        #[arg(long, default_value = "0,1")]
        axes: String,
        /// Iteration budget per pixel.
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
    },
}

/// Everything that can go wrong, mapped to stage-specific exit codes:
/// 1 check-suite failure, 2 config, 3 generation, 4 normalization, 5 solver,
/// 6 diagnostics, 7 io, 8 integrity, 9 algebra.
#[derive(Debug)]
pub enum Failure {
    Core(fatou_core::Error),
    Io { context: String, message: String },
    ConfigParse { path: String, message: String },
    Integrity { code: &'static str, message: String },
    ChecksFailed { failed: Vec<String> },
}

impl From<fatou_core::Error> for Failure {
    fn from(e: fatou_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn io(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Failure::Io {
            context: context.into(),
            message: err.to_string(),
        }
    }

    fn code(&self) -> &str {
        match self {
            Failure::Core(e) => e.code(),
            Failure::Io { .. } => "io-error",
            Failure::ConfigParse { .. } => "config-parse",
            Failure::Integrity { code, .. } => code,
            Failure::ChecksFailed { .. } => "checks-failed",
        }
    }

    fn stage(&self) -> &str {
        match self {
            Failure::Core(e) => e.stage(),
            Failure::Io { .. } => "io",
            Failure::ConfigParse { .. } => "config",
            Failure::Integrity { .. } => "integrity",
            Failure::ChecksFailed { .. } => "check",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Io { context, message } => format!("{context}: {message}"),
            Failure::ConfigParse { path, message } => format!("{path}: {message}"),
            Failure::Integrity { message, .. } => message.clone(),
            Failure::ChecksFailed { failed } => {
                format!("invariant suites failed: {}", failed.join(", "))
            }
        }
    }

    fn exit_code(&self) -> u8 {
        match self.stage() {
            "config" => 2,
            "generation" => 3,
            "normalization" => 4,
            "solver" => 5,
            "diagnostics" => 6,
            "io" => 7,
            "integrity" => 8,
            "algebra" => 9,
            _ => 1,
        }
    }
}

fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if n > 0 {
            // A second init (e.g. in tests) is harmless; the pool is global.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let result = match cli.command {
        Command::Solve { config, out } => commands::solve(&config, &out),
        Command::Diagnose { config, artifacts } => commands::diagnose(&config, &artifacts),
        Command::Check { suite, artifacts } => {
            commands::check(suite.as_deref(), artifacts.as_deref())
        }
        Command::Render {
            artifacts,
            window,
            px,
            axes,
            max_iter,
        } => commands::render(&artifacts, &window, px, &axes, max_iter),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let payload = serde_json::json!({
                "error": {
                    "code": failure.code(),
                    "stage": failure.stage(),
                    "message": failure.message(),
                },
                "exit": failure.exit_code(),
            });
            eprintln!("{payload}");
            ExitCode::from(failure.exit_code())
        }
    }
}
