//! Experiment runner: configuration, the seven commands and the on-disk run
//! layout shared by the `tcilab` binary and its tests.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod svg;

use std::path::{Path, PathBuf};

use artifacts::{render_files, write_run, Check, Outcome};
use config::{ConfigError, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyKernels,
    ItoIsometry,
    ConvolutionCheck,
    Moments,
    Tci,
    Lipschitz,
    Simulate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::VerifyKernels,
        Command::ItoIsometry,
        Command::ConvolutionCheck,
        Command::Moments,
        Command::Tci,
        Command::Lipschitz,
        Command::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyKernels => "verify-kernels",
            Command::ItoIsometry => "ito-isometry",
            Command::ConvolutionCheck => "convolution-check",
            Command::Moments => "moments",
            Command::Tci => "tci",
            Command::Lipschitz => "lipschitz",
            Command::Simulate => "simulate",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] tcilab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Exit status when every step ran but a check failed.
pub const EXIT_CHECK_FAILED: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use tcilab::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidInput(_) | E::Range { .. } | E::CoefficientContract { .. }) => 2,
            CliError::Core(E::Divergence { .. }) => 4,
            CliError::Core(E::Io(_)) => 1,
            CliError::Io(_) | CliError::Csv(_) | CliError::Pool(_) => 1,
            CliError::Core(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use tcilab::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Core(E::InvalidInput(_)) => "invalid_input",
            CliError::Core(E::Range { .. }) => "range",
            CliError::Core(E::CoefficientContract { .. }) => "coefficient_contract",
            CliError::Core(E::Divergence { .. }) => "divergence",
            CliError::Core(E::Underpowered { .. }) => "underpowered",
            CliError::Core(E::TailGuard { .. }) => "tail_guard",
            CliError::Core(E::Io(_)) => "io",
            CliError::Core(_) => "numerical",
            CliError::Io(_) | CliError::Csv(_) | CliError::Pool(_) => "io",
        }
    }
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cmd {
        Command::VerifyKernels => commands::verify_kernels(cfg),
        Command::ItoIsometry => commands::ito_isometry(cfg),
        Command::ConvolutionCheck => commands::convolution_check(cfg),
        Command::Moments => commands::moments(cfg),
        Command::Tci => commands::tci(cfg),
        Command::Lipschitz => commands::lipschitz(cfg),
        Command::Simulate => commands::simulate(cfg),
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub manifest: String,
}

pub fn run_dir(out_root: &Path, cmd: Command, seed: u64) -> PathBuf {
    out_root.join(format!("{}-seed{seed}", cmd.name()))
}

/// Runs `cmd` on a pool of `workers` threads (all cores when `None` or 0)
/// and writes the run directory under `out_root`.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, out_root: &Path, workers: Option<usize>) -> Result<RunSummary, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let outcome = pool.install(|| run_command(cmd, cfg))?;
    let files = render_files(cmd.name(), &cfg.snapshot(), cfg.run.seed, &outcome)?;
    let dir = write_run(&run_dir(out_root, cmd, cfg.run.seed), &files)?;
    Ok(RunSummary {
        dir,
        passed: outcome.passed(),
        checks: outcome.checks,
        manifest: artifacts::manifest(&files),
    })
}
