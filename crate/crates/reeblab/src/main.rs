use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reeblab::config::{load_config, ExperimentConfig, Tolerances};
use reeblab::experiments::{self, Check, Outcome};
use reeblab::{batch, io};

/// Gradient flows of action functionals on loops in a symplectization.
#[derive(Parser)]
#[command(name = "reeblab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model identities on random samples.
    Validate {
        #[arg(long)]
        model: String,
    },
    /// Integrate a flow and write the trajectory.
    Flow {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one check on a written trajectory (`<stem>.jsonl`).
    Verify {
        trajectory: PathBuf,
        /// der, lemma2, laplacian, rab2 or roundtrip.
        #[arg(long)]
        which: String,
        /// Takes the thresholds from this config's `tolerances`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Delay flow, projection, lift and both roundtrips.
    Bijection {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config matching a glob concurrently.
    Batch {
        pattern: String,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Root for the per-experiment directories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(outcome: Outcome) -> ExitCode {
    match io::to_string_pretty_sci(&outcome.report) {
        // A closed pipe downstream is not our failure.
        Ok(text) => drop(writeln!(std::io::stdout().lock(), "{text}")),
        Err(e) => eprintln!("cannot render report: {e}"),
    }
    if let Some(msg) = outcome.report.get("error").and_then(|e| e.as_str()) {
        eprintln!("error: {msg}");
    }
    ExitCode::from(outcome.exit_code as u8)
}

fn with_config(
    path: &Path,
    out: Option<PathBuf>,
    runner: fn(&ExperimentConfig, &Path) -> reeblab::Result<Outcome>,
) -> Outcome {
    load_config(path)
        .and_then(|cfg| runner(&cfg, &out.unwrap_or_else(|| cfg.output_dir.clone())))
        .unwrap_or_else(|e| experiments::from_error(&e))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { model } => experiments::run_validate(&model),
        Command::Flow { config, out } => with_config(&config, out, experiments::run_flow),
        Command::Bijection { config, out } => with_config(&config, out, experiments::run_bijection),
        Command::Verify { trajectory, which, config } => {
            let Some(check) = Check::parse(&which) else {
                return Outcome {
                    exit_code: experiments::EXIT_USAGE,
                    report: serde_json::json!({ "error": format!("unknown check {which:?}") }),
                };
            };
            let tol = match config.map(|c| load_config(&c)) {
                None => Tolerances::default(),
                Some(Ok(cfg)) => cfg.tolerances,
                Some(Err(e)) => return experiments::from_error(&e),
            };
            experiments::run_verify(&trajectory, check, &tol)
        }
        Command::Batch { pattern, jobs, out } => batch::run_batch(&pattern, jobs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REEBLAB_LOG", "warn")).init();
    emit(run(Cli::parse().command))
}
