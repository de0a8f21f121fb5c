//! Experiment runner for ring oscillator lattices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ringosc::correlation::FitMode;

use config::{Kind, Overrides, Source};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ringosc",
    version,
    about = "Simulate ring oscillators and lattices of coupled rings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orbit census of single rings from random initial states.
    Ring(CommonArgs),
    /// Analytic and simulated periods of every stable k-pulse orbit.
    PeriodTable(CommonArgs),
    /// Lattice trajectories with phase-field snapshots.
    Lattice(CommonArgs),
    /// Lattice trajectories plus correlation curves and fitted lengths.
    Correlation(CommonArgs),
    /// Integrating vs differentiating response of one neuron to a square wave.
    NeuronDemo(CommonArgs),
    /// Check a config, and optionally a state file against its network.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw state file (JSON) to check.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Network::Lattice)]
        network: Network,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Network {
    Ring,
    Lattice,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FitModeArg {
    Raw,
    Floor,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Inclusive range `A..B` or comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory. Defaults to `$RINGOSC_OUT/<experiment>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated snapshot times in units of tau.
    #[arg(long)]
    pub snapshots: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub d_max: Option<usize>,
    #[arg(long, value_enum)]
    pub fit_mode: Option<FitModeArg>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Continue the run stored in this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let flag = |name: &'static str| move |e: String| CliError::Config(format!("--{name}: {e}"));
        let seeds = match (&self.seed, &self.seeds) {
            (Some(s), _) => Some(vec![*s]),
            (None, Some(list)) => Some(config::parse_seeds(list).map_err(flag("seeds"))?),
            (None, None) => None,
        };
        let snapshots = self
            .snapshots
            .as_deref()
            .map(config::parse_times)
            .transpose()
            .map_err(flag("snapshots"))?;
        Ok(Overrides {
            seeds,
            out: self.out.clone(),
            snapshots,
            t_end: self.t_end,
            d_max: self.d_max,
            fit_mode: self.fit_mode.map(|m| match m {
                FitModeArg::Raw => FitMode::Raw,
                FitModeArg::Floor => FitMode::Floor,
            }),
            workers: self.workers,
        })
    }

    fn resolve(&self, kind: Kind) -> Result<config::Resolved, CliError> {
        let (cfg, source) = match &self.config {
            Some(path) => config::load(path)?,
            None => (config::ExperimentConfig::default(), Source::default()),
        };
        config::resolve(kind, cfg, &source, self.overrides()?)
    }
}

/// Runs one command; the returned text goes to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let (kind, args) = match &cli.command {
        Command::Ring(a) => (Kind::Ring, a),
        Command::PeriodTable(a) => (Kind::PeriodTable, a),
        Command::Lattice(a) => (Kind::Lattice, a),
        Command::Correlation(a) => (Kind::Correlation, a),
        Command::NeuronDemo(a) => (Kind::NeuronDemo, a),
        Command::Validate {
            common,
            state,
            network,
        } => {
            let resolved = common.resolve(Kind::Validate)?;
            return experiments::validate(
                &resolved,
                *network == Network::Lattice,
                state.as_deref(),
            );
        }
    };
    let resolved = args.resolve(kind)?;
    experiments::run_experiment(&resolved, args.resume.clone())?;
    Ok(format!(
        "{} run written to {}\n",
        kind,
        resolved.out.display()
    ))
}
