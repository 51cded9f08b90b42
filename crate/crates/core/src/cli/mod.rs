//! The `cqcd` command-line driver.
//!
//! Every subcommand reads an optional TOML config (`--config`), applies flag
//! overrides, resolves mode-dependent defaults and writes a CSV or JSON table
//! whose header embeds the resolved config. Passing such an output file back
//! as `--config` reruns the experiment.
//!
//! Exit codes: [`EXIT_OK`], [`EXIT_FAILURE`], [`EXIT_CONFIG`] for usage and
//! parameter errors, [`EXIT_INVALID_RUN`] for censoring breaches and
//! infeasible single-point plans (the output is still written).

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::RunContext;
pub use config::{ExperimentConfig, Format, Mode};
pub use output::{Cell, Report, Table};

use crate::error::Error;
use crate::sensing::Construction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVALID_RUN: i32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::InvalidRun(_) => EXIT_INVALID_RUN,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::UnknownStrategy { .. }
            | Error::RatioTarget(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptySupport
            | Error::SupportOutOfRange { .. } => CliError::Config(e.to_string()),
            Error::CensoringBreach { .. } => CliError::InvalidRun(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cqcd", version, about = "Quickest change detection from compressive measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measurement budget γ₁, γ₂, γ over an N grid
    Plan(RunArgs),
    /// Delay bracket for one (α, γ)
    Bounds(RunArgs),
    /// Delay-ratio bracket, optionally with a simulated ratio (--estimate)
    Ratio(RunArgs),
    /// Monte Carlo ADD and PFA at one point
    Simulate(RunArgs),
    /// ADD/PFA tradeoff over an α grid with one matrix
    SweepAlpha(RunArgs),
    /// ADD over a compression-ratio grid, fresh matrix per γ
    SweepGamma(RunArgs),
    /// Empirical probability of the energy concentration event
    Concentration(RunArgs),
}

impl Command {
    pub fn split(&self) -> (Mode, &RunArgs) {
        match self {
            Command::Plan(a) => (Mode::Plan, a),
            Command::Bounds(a) => (Mode::Bounds, a),
            Command::Ratio(a) => (Mode::Ratio, a),
            Command::Simulate(a) => (Mode::Simulate, a),
            Command::SweepAlpha(a) => (Mode::SweepAlpha, a),
            Command::SweepGamma(a) => (Mode::SweepGamma, a),
            Command::Concentration(a) => (Mode::Concentration, a),
        }
    }
}

/// Flags shared by all subcommands; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config, or a previous CSV/JSON output to rerun
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Master seed for all randomness
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (does not change results)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Per-trial CSV log (simulate)
    #[arg(long)]
    pub outcomes: Option<PathBuf>,

    /// Signal dimension N
    #[arg(long)]
    pub n: Option<usize>,
    /// Measurements M
    #[arg(long, conflicts_with = "gamma")]
    pub m: Option<usize>,
    /// Compression ratio M/N
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fixed sparsity K
    #[arg(long)]
    pub k: Option<usize>,
    /// K = ceil(k_scale · ln N) when K is not fixed
    #[arg(long)]
    pub k_scale: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Sensing-matrix family
    #[arg(long)]
    pub construction: Option<String>,
    /// Observation model (scalar, vector)
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub pi0: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,

    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Target delay ratio
    #[arg(long)]
    pub r0: Option<f64>,
    /// Multiplier on upper brackets when checking simulations
    #[arg(long)]
    pub slack: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,

    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Matrix draws for the concentration experiment
    #[arg(long)]
    pub draws: Option<usize>,
    /// Draws tried when searching for a concentration-passing matrix
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// Use the first matrix draw without the concentration check
    #[arg(long)]
    pub no_concentration: bool,
    /// Also simulate the delay ratio (ratio)
    #[arg(long)]
    pub estimate: bool,
}

impl RunArgs {
    /// Applies flag overrides on top of `cfg`.
    pub fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                *slot = value.clone();
            }
        }
        let p = &mut cfg.problem;
        set(&mut p.n, &self.n);
        if self.m.is_some() {
            p.m = self.m;
            p.gamma = None;
        }
        if self.gamma.is_some() {
            p.gamma = self.gamma;
            p.m = None;
        }
        set_opt(&mut p.k, &self.k);
        set(&mut p.k_scale, &self.k_scale);
        set(&mut p.snr_db, &self.snr_db);
        set(&mut p.sigma2, &self.sigma2);
        if let Some(name) = &self.construction {
            p.construction = name.parse::<Construction>()?;
        }

        let d = &mut cfg.detector;
        set(&mut d.rho, &self.rho);
        set(&mut d.pi0, &self.pi0);
        set(&mut d.alpha, &self.alpha);

        let t = &mut cfg.theory;
        set(&mut t.delta, &self.delta);
        set(&mut t.beta, &self.beta);
        set(&mut t.r0, &self.r0);
        set(&mut t.slack, &self.slack);
        set(&mut t.c, &self.c);
        set(&mut t.c1, &self.c1);
        set(&mut t.c2, &self.c2);
        set(&mut t.delta1, &self.delta1);
        set(&mut t.delta2, &self.delta2);

        let s = &mut cfg.simulation;
        set(&mut s.seed, &self.seed);
        set(&mut s.n_trials, &self.trials);
        set_opt(&mut s.horizon, &self.horizon);
        set(&mut s.model, &self.model);
        set(&mut s.n_draws, &self.draws);
        set(&mut s.max_attempts, &self.max_attempts);
        if self.no_concentration {
            s.require_concentration = false;
        }
        if self.estimate {
            s.estimate_ratio = true;
        }

        set_opt(&mut cfg.sweep.alphas, &self.alphas);
        set_opt(&mut cfg.sweep.gammas, &self.gammas);
        set_opt(&mut cfg.sweep.n_grid, &self.n_grid);

        set_opt(&mut cfg.output.path, &self.out);
        set(&mut cfg.output.format, &self.format);
        set_opt(&mut cfg.output.outcomes, &self.outcomes);
        Ok(cfg)
    }

    /// File config (if any) with overrides applied, resolved for `mode`.
    pub fn resolve(&self, mode: Mode) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let cfg = self.apply(base)?.resolve(mode)?;
        crate::montecarlo::ModelRegistry::standard().get(&cfg.simulation.model)?;
        Ok(cfg)
    }
}

/// Resolves the config and computes the report without writing it.
pub fn build_report(cli: &Cli) -> Result<Report, CliError> {
    let (mode, args) = cli.command.split();
    let cfg = args.resolve(mode)?;
    commands::run(mode, &cfg, &RunContext { threads: args.threads })
}

/// Runs a parsed command line: computes, writes the output, and reports an
/// invalid run as an error after the output is on disk.
pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    let report = build_report(cli)?;
    let format = report.config.output.format;
    match &report.config.output.path {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Other(format!("cannot create {}: {e}", path.display())))?;
            let mut w = std::io::BufWriter::new(file);
            report.write(format, &mut w)?;
            w.flush().map_err(|e| CliError::Other(e.to_string()))?;
        }
        None => {
            let stdout = std::io::stdout();
            report.write(format, stdout.lock())?;
        }
    }
    if let Some(reason) = &report.invalid {
        return Err(CliError::InvalidRun(reason.clone()));
    }
    Ok(report)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("cqcd: {e}");
            e.exit_code()
        }
    }
}
