//! `esg` — reproducible runs of the rating, ensemble, DMV, CAPM, and
//! backtest pipelines. Every subcommand writes deterministic CSV
//! artifacts plus a `manifest.txt` of config and file content hashes.

mod capm_io;
mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use config::Config;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config values, missing files. Exit code 1.
    Config(String),
    /// Unreadable or malformed data. Exit code 2.
    Data(String),
    /// Numerical degeneracy (singular systems, zero variance, ...). Exit code 3.
    Numeric(String),
}

impl CliError {
    pub fn config(m: impl ToString) -> Self {
        CliError::Config(m.to_string())
    }

    pub fn data(m: impl ToString) -> Self {
        CliError::Data(m.to_string())
    }

    pub fn numeric(m: impl ToString) -> Self {
        CliError::Numeric(m.to_string())
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<esg_core::ratings::RatingsError> for CliError {
    fn from(e: esg_core::ratings::RatingsError) -> Self {
        use esg_core::ratings::RatingsError::*;
        match e {
            DegenerateColumn { .. } | InsufficientOverlap { .. } => CliError::numeric(e),
            _ => CliError::data(e),
        }
    }
}

impl From<esg_core::ensemble::EnsembleError> for CliError {
    fn from(e: esg_core::ensemble::EnsembleError) -> Self {
        use esg_core::ensemble::EnsembleError::*;
        match e {
            AlphaOutOfRange(_) => CliError::config(e),
            DegenerateCovariance => CliError::numeric(e),
            _ => CliError::data(e),
        }
    }
}

impl From<esg_core::dmv::DmvError> for CliError {
    fn from(e: esg_core::dmv::DmvError) -> Self {
        use esg_core::dmv::DmvError::*;
        match e {
            InvalidParameter(_) => CliError::config(e),
            _ => CliError::numeric(e),
        }
    }
}

impl From<esg_core::capm::CapmError> for CliError {
    fn from(e: esg_core::capm::CapmError) -> Self {
        use esg_core::capm::CapmError::*;
        match e {
            InvalidUniverse(_) | InvalidPopulation(_) => CliError::data(e),
            SingularSystem(_) | DegenerateMarket => CliError::numeric(e),
        }
    }
}

impl From<esg_core::market_env::EnvError> for CliError {
    fn from(e: esg_core::market_env::EnvError) -> Self {
        use esg_core::market_env::EnvError::*;
        match e {
            InvalidParameter(_) => CliError::config(e),
            WeightsOffSimplex(_) => CliError::numeric(e),
            _ => CliError::data(e),
        }
    }
}

impl From<esg_core::synthgen::SynthError> for CliError {
    fn from(e: esg_core::synthgen::SynthError) -> Self {
        use esg_core::synthgen::SynthError::*;
        match e {
            InvalidConfig(_) => CliError::config(e),
            NotRepairablePsd(_) => CliError::numeric(e),
            Ratings(inner) => inner.into(),
        }
    }
}

impl From<esg_core::policy::PolicyError> for CliError {
    fn from(e: esg_core::policy::PolicyError) -> Self {
        use esg_core::policy::PolicyError::*;
        match e {
            InvalidConfig(_) => CliError::config(e),
            _ => CliError::numeric(e),
        }
    }
}

impl From<esg_core::backtest::BacktestError> for CliError {
    fn from(e: esg_core::backtest::BacktestError) -> Self {
        use esg_core::backtest::BacktestError::*;
        match e {
            Window { id, strategy, source } => {
                let inner: CliError = (*source).into();
                let m = format!("window {id} ({strategy}): {}", inner.message());
                match inner {
                    CliError::Config(_) => CliError::Config(m),
                    CliError::Data(_) => CliError::Data(m),
                    CliError::Numeric(_) => CliError::Numeric(m),
                }
            }
            RangeTooShort | InvalidWindow(_) => CliError::config(e),
            ZeroVariance | NotEnoughReturns { .. } => CliError::numeric(e),
            Data(_) => CliError::data(e),
            Ratings(inner) => inner.into(),
            Ensemble(inner) => inner.into(),
            Capm(inner) => inner.into(),
            Policy(inner) => inner.into(),
            Env(inner) => inner.into(),
            Dmv(inner) => inner.into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "esg",
    version,
    about = "Portfolio construction under ESG-rating ambiguity"
)]
struct Cli {
    /// Key-value config file with `[section]` headers.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key: --set section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (default `out`, or config key run.out_dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a panel (decimals and/or letter grades) and write it back on
    /// the common 0-100 numeric scale.
    Harmonize {
        /// ESG panel CSV (header: `firm,<rater>,...`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cross-rater Pearson correlation matrix of a panel.
    Corr {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Per-firm ensemble scores under one method.
    Ensemble {
        #[arg(long)]
        input: Option<PathBuf>,
        /// centroid | median | pca | alpha-maxmin
        #[arg(long)]
        method: Option<String>,
        /// Ambiguity attitude for alpha-maxmin (0 = optimist, 1 = pessimist).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Solve the double mean-variance model over a (type, b) grid.
    Dmv,
    /// ESG-modified CAPMs (with and without uncertainty) from universe
    /// and agent tables.
    Capm {
        /// CSV `asset,mu_excess,mu_esg`.
        #[arg(long)]
        means: Option<PathBuf>,
        /// Square CSV return covariance.
        #[arg(long)]
        cov_returns: Option<PathBuf>,
        /// Square CSV ESG covariance.
        #[arg(long)]
        cov_esg: Option<PathBuf>,
        /// CSV `weight,gamma,b,theta`.
        #[arg(long)]
        agents: Option<PathBuf>,
    },
    /// Generate a synthetic ESG panel and OHLCV price files.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        firms: Option<usize>,
        #[arg(long)]
        assets: Option<usize>,
        #[arg(long)]
        bars: Option<usize>,
    },
    /// Rolling-window strategy comparison; writes report.csv and ranks.csv.
    Backtest {
        #[arg(long)]
        seed: Option<u64>,
        /// Override every strategy's optimizer: closed-form | cem.
        #[arg(long)]
        optimizer: Option<String>,
        /// Override CEM population size.
        #[arg(long)]
        population: Option<usize>,
        /// Override CEM iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::config(format!(
                    "config file not found: {}",
                    path.display()
                )));
            }
            Config::from_file(path)?
        }
        None => Config::default(),
    };
    for item in &cli.overrides {
        let Some((k, v)) = item.split_once('=') else {
            return Err(CliError::config(format!("--set expects KEY=VALUE, got {item:?}")));
        };
        cfg.set(k.trim(), v.trim());
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.get("run.out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;

    match &cli.command {
        Command::Harmonize { input } => commands::harmonize(&cfg, input.as_deref(), &out_dir),
        Command::Corr { input } => commands::corr(&cfg, input.as_deref(), &out_dir),
        Command::Ensemble { input, method, alpha } => {
            commands::ensemble(&cfg, input.as_deref(), method.as_deref(), *alpha, &out_dir)
        }
        Command::Dmv => commands::dmv(&cfg, &out_dir),
        Command::Capm { means, cov_returns, cov_esg, agents } => commands::capm(
            &cfg,
            means.as_deref(),
            cov_returns.as_deref(),
            cov_esg.as_deref(),
            agents.as_deref(),
            &out_dir,
        ),
        Command::Synth { seed, firms, assets, bars } => {
            commands::synth(&cfg, *seed, *firms, *assets, *bars, &out_dir)
        }
        Command::Backtest { seed, optimizer, population, iterations } => commands::backtest(
            &cfg,
            *seed,
            optimizer.as_deref(),
            *population,
            *iterations,
            &out_dir,
        ),
    }
}

fn main() {
    match run() {
        Ok(()) => {}
        Err(e) => {
            eprintln!(
                "error: category={} exit={} message={:?}",
                e.category(),
                e.exit_code(),
                e.message()
            );
            std::process::exit(e.exit_code());
        }
    }
}
