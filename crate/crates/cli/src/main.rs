//! `mtlz`: verify commuting families, evolve states, compute multistate LZ
//! transition matrices, map non-adiabatic couplings and sweep parameters.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 verification failure (`--strict` verify-family).

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentConfig, Format, TaskName};
use run::{run_task, Context, Diagnostics};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mtlz_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e.kind() {
                mtlz_core::ErrorKind::Input => 2,
                mtlz_core::ErrorKind::Numerical => 3,
            },
            CliError::Verification(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtlz", version, about = "Commuting Hamiltonian families and multistate Landau-Zener scattering")]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output file; stdout when omitted. A run record is written to `<out>.record.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "MTLZ_THREADS")]
    threads: Option<usize>,
    /// Seed for randomized phases; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat precondition warnings and threshold excesses as failures.
    #[arg(long, global = true)]
    strict: bool,
    /// Output format; overrides the config.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Add wall-clock timings to the run record (breaks byte-for-byte reproducibility of the record).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check commutators and curls on a grid.
    VerifyFamily,
    /// Propagate a state along a path.
    Evolve {
        /// Trace populations and adiabatic levels after every step.
        #[arg(long)]
        trace_spectrum: bool,
    },
    /// Transition probability matrix.
    Scatter,
    /// Non-adiabatic coupling raster over two slots.
    KappaMap,
    /// Repeat a task over a range of one parameter.
    Sweep,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    artifact_version: &'static str,
    task: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    results: &'a serde_json::Value,
    diagnostics: &'a Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<serde_json::Value>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let started = Instant::now();
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(o) = &cli.out {
        cfg.output.path = Some(o.clone());
    }
    let (task, trace_spectrum) = match cli.command {
        Command::VerifyFamily => (TaskName::VerifyFamily, false),
        Command::Evolve { trace_spectrum } => (TaskName::Evolve, trace_spectrum),
        Command::Scatter => (TaskName::Scatter, false),
        Command::KappaMap => (TaskName::KappaMap, false),
        Command::Sweep => (TaskName::Sweep, false),
    };
    let ctx = Context { seed: cfg.seed.unwrap_or(0), strict: cli.strict, format: cfg.output.format, trace_spectrum };
    let out = run_task(task, &cfg, &ctx)?;
    let elapsed = started.elapsed().as_secs_f64();

    match &cfg.output.path {
        Some(path) => {
            write_file(path, &out.artifact)?;
            for (suffix, text) in &out.extra {
                write_file(&with_suffix(path, suffix), text)?;
            }
            // the destination is not part of the experiment
            let mut echo = cfg.clone();
            echo.output.path = None;
            let record = RunRecord {
                artifact_version: env!("CARGO_PKG_VERSION"),
                task: task.as_str(),
                seed: ctx.seed,
                config: &echo,
                results: &out.results,
                diagnostics: &out.diagnostics,
                timings: cli.timings.then(|| serde_json::json!({ "wall_seconds": elapsed })),
            };
            let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
            text.push('\n');
            write_file(&with_suffix(path, ".record.json"), &text)?;
        }
        None => print!("{}", out.artifact),
    }
    if let Some(msg) = out.verification_failure {
        eprintln!("{}", out.summary);
        return Err(CliError::Verification(msg));
    }
    Ok(out.summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
