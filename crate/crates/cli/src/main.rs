//! `inash`: solve, verify and simulate intermittent-communication Nash
//! seeking experiments from JSON configs.
//!
//! Exit codes: 0 ok, 2 config error, 3 math precondition, 4 numeric failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intermittent_nash::experiment::{self, ExperimentConfig, ExperimentError};
use intermittent_nash::AcrMode;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "inash", version, about = "Distributed Nash equilibrium seeking with intermittent communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the Nash equilibrium of the configured game.
    SolveNe(Common),
    /// Verify the configured schedule: ACR slack and window statistics.
    CheckSchedule {
        #[command(flatten)]
        common: Common,
        /// Communication ratio under test (defaults to analysis.vartheta).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Build the Lyapunov certificate and evaluate all convergence conditions.
    CheckConditions {
        #[command(flatten)]
        common: Common,
        /// Communication ratio for the ACR condition (defaults to analysis.vartheta).
        #[arg(long)]
        theta: Option<f64>,
        /// Emit the ACR margin on an N-step grid of ratios as CSV instead.
        #[arg(long, value_name = "N")]
        sweep: Option<usize>,
    },
    /// Simulate and write the trajectory CSV and summary JSON.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Config file; repeat for a batch.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Output directory; reports go to stdout when omitted (except `run`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for batches.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    FromZero,
    AllPairs,
}

impl From<Mode> for AcrMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::FromZero => AcrMode::FromZero,
            Mode::AllPairs => AcrMode::AllPairs,
        }
    }
}

/// What one config produced: text for stdout and files to write.
#[derive(Default)]
struct Outcome {
    stdout: String,
    files: Vec<(PathBuf, String)>,
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, ExperimentError> {
    serde_json::to_string_pretty(v).map_err(|e| ExperimentError::Numeric(e.to_string()))
}

fn emit(out: Option<&Path>, file: String, body: String) -> Outcome {
    match out {
        Some(dir) => Outcome {
            stdout: String::new(),
            files: vec![(dir.join(file), body)],
        },
        None => Outcome {
            stdout: body,
            files: Vec::new(),
        },
    }
}

fn execute(command: &Command, path: &Path) -> Result<Outcome, ExperimentError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    let name = cfg.display_name();
    match command {
        Command::SolveNe(c) => {
            let sol = experiment::solve_ne(&cfg)?;
            Ok(emit(c.out.as_deref(), format!("{name}_nash.json"), to_json(&sol)?))
        }
        Command::CheckSchedule { common, theta, mode } => {
            let report = experiment::check_schedule(&cfg, *theta, mode.map(Into::into))?;
            Ok(emit(common.out.as_deref(), format!("{name}_schedule.json"), to_json(&report)?))
        }
        Command::CheckConditions { common, theta, sweep } => {
            if let Some(t) = theta {
                cfg.analysis.get_or_insert_with(Default::default).vartheta = *t;
            }
            let report = experiment::check_conditions(&cfg)?;
            match sweep {
                Some(steps) if *steps < 2 => Err(ExperimentError::Config("--sweep needs at least 2 steps".into())),
                Some(steps) => {
                    let csv = experiment::acr_sweep_csv(&report.constants, *steps)?;
                    Ok(emit(common.out.as_deref(), format!("{name}_acr_sweep.csv"), csv))
                }
                None => Ok(emit(common.out.as_deref(), format!("{name}_conditions.json"), to_json(&report)?)),
            }
        }
        Command::Run { common, seed } => {
            let run = experiment::run(&cfg, *seed)?;
            let dir = common
                .out
                .clone()
                .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let (csv, json) = experiment::write_run(&run, &dir)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
            Ok(Outcome {
                stdout: to_json(&run.summary)?,
                files: Vec::new(),
            })
        }
    }
}

fn write_outcome(outcome: &Outcome) -> Result<(), ExperimentError> {
    for (path, body) in &outcome.files {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| ExperimentError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(path, body).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
    }
    if !outcome.stdout.is_empty() {
        // A closed pipe (`| head`) is not an error worth reporting.
        let _ = writeln!(std::io::stdout().lock(), "{}", outcome.stdout.trim_end());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::SolveNe(c) => c,
        Command::CheckSchedule { common, .. } | Command::CheckConditions { common, .. } | Command::Run { common, .. } => {
            common
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let results: Vec<_> = pool.install(|| common.config.par_iter().map(|p| execute(&cli.command, p)).collect());

    let mut code = 0;
    for (path, result) in common.config.iter().zip(results) {
        let result = result.and_then(|o| write_outcome(&o));
        if let Err(e) = result {
            eprintln!("error: {}: {e}", path.display());
            if code == 0 {
                code = e.exit_code();
            }
        }
    }
    ExitCode::from(code as u8)
}
