use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcilab_cli::config::parse_config;
use tcilab_cli::{execute, CliError, Command, EXIT_CHECK_FAILED};

#[derive(Parser)]
#[command(name = "tcilab", version, about = "Monte Carlo checks for transportation-cost inequalities of the stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; defaults to $TCILAB_OUT, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Configuration overrides such as `--grid.nx 201` or `--run.seed=7`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Heat kernel weight bounds and the weighted semigroup contraction.
    VerifyKernels(Common),
    /// Weighted second moment of the stochastic convolution against quadrature.
    ItoIsometry(Common),
    /// Factorized against direct stochastic convolution under refinement.
    ConvolutionCheck(Common),
    /// Moment bounds for the stochastic convolution.
    Moments(Common),
    /// Transportation-cost constants over a grid of weight rates.
    Tci(Common),
    /// Lipschitz dependence on the initial condition.
    Lipschitz(Common),
    /// Solve the equation and store paths.
    Simulate(Common),
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::VerifyKernels(c) => (Command::VerifyKernels, c),
            Sub::ItoIsometry(c) => (Command::ItoIsometry, c),
            Sub::ConvolutionCheck(c) => (Command::ConvolutionCheck, c),
            Sub::Moments(c) => (Command::Moments, c),
            Sub::Tci(c) => (Command::Tci, c),
            Sub::Lipschitz(c) => (Command::Lipschitz, c),
            Sub::Simulate(c) => (Command::Simulate, c),
        }
    }
}

/// Pulls `--config`, `--out` and `--workers` that landed among the trailing
/// overrides back into `common`.
fn hoist(common: &mut Common) -> Result<(), String> {
    let mut rest = Vec::new();
    let mut it = std::mem::take(&mut common.overrides).into_iter();
    while let Some(arg) = it.next() {
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) => (f.to_string(), Some(v.to_string())),
            None => (arg.clone(), None),
        };
        if !matches!(flag.as_str(), "--config" | "--out" | "--workers") {
            rest.push(arg);
            continue;
        }
        let value = inline.or_else(|| it.next()).ok_or(format!("{flag} needs a value"))?;
        match flag.as_str() {
            "--config" => common.config = Some(value.into()),
            "--out" => common.out = Some(value.into()),
            _ => common.workers = Some(value.parse().map_err(|_| format!("--workers: not a count: {value}"))?),
        }
    }
    common.overrides = rest;
    Ok(())
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("error[{}]: {err}", err.kind());
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let (cmd, mut common) = Cli::parse().command.split();
    if let Err(msg) = hoist(&mut common) {
        eprintln!("error[config]: {msg}");
        return ExitCode::from(2);
    }
    let cfg = match parse_config(common.config.as_deref(), &common.overrides) {
        Ok(c) => c,
        Err(e) => return fail(&e.into()),
    };
    let root = common
        .out
        .or_else(|| std::env::var_os("TCILAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    match execute(cmd, &cfg, &root, common.workers) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{}", summary.dir.display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED as u8)
            }
        }
        Err(e) => fail(&e),
    }
}
