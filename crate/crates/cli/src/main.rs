//! `conj-atlas` command-line front end.
//!
//! Exit codes: 0 success, 1 a check reported violations, 2 configuration
//! error, 3 numerical failure (details in `diagnostics.json`).

mod build;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{Command, ExperimentConfig};
use crate::output::{sha256_hex, to_json, Artifacts, Manifest, Versions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "conj-atlas", version, about = "Conjugate points and caustics of Hamiltonian boundary value problems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also draw the locus as SVG.
    #[arg(long, global = true)]
    emit_svg: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Multi-start shooting on one boundary problem.
    Solve,
    /// Solution counts over a grid of boundary parameters.
    Sweep,
    /// First conjugate locus of a base point.
    Locus,
    /// Degeneracy and singularity type of every solution.
    Classify,
    /// Invariance of the model and the degeneracy bound of the action.
    SymmetryCheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Sweep => Command::Sweep,
            Cmd::Locus => Command::Locus,
            Cmd::Classify => Command::Classify,
            Cmd::SymmetryCheck => Command::SymmetryCheck,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONJ_ATLAS_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("conj-atlas: {e}");
            e.code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let command = Command::from(cli.command);
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.check_blocks(command)?;
    let built = build::model(&cfg.model)?;

    let workers = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be positive".into())),
        Some(k) => k,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("--workers: {e}")))?;

    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Artifacts::new(&dir)?;
    let ctx = commands::Context { cfg: &cfg, built: &built, emit_svg: cli.emit_svg };
    let result = commands::run(command, &ctx, &mut out);
    let exit_code = match &result {
        Ok(c) => *c,
        Err(e) => e.code(),
    };
    if let Err(e) = &result {
        #[derive(serde::Serialize)]
        struct Diagnostics<'a> {
            command: &'a str,
            exit_code: i32,
            error: String,
        }
        let diag = Diagnostics { command: command.name(), exit_code, error: e.to_string() };
        out.write("diagnostics.json", &to_json(&diag)?)?;
    }
    let manifest = Manifest {
        command: command.name().into(),
        config_sha256: sha256_hex(&bytes),
        seed: cfg.seed,
        workers,
        versions: Versions { conj_atlas: conj_atlas::VERSION, conj_atlas_cli: env!("CARGO_PKG_VERSION") },
        artifacts: out.names().to_vec(),
        exit_code,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    out.write("manifest.json", &to_json(&manifest)?)?;
    result
}
