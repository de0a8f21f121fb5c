//! Experiment runners. Each writes its artifacts under the resolved output
//! directory together with a `manifest.json`.

mod demo;
mod lattice;
mod ring;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind, Resolved};
use crate::error::CliError;
use crate::output::{create_dir, write_json};

pub use demo::validate;

#[derive(Clone, Debug, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub seconds: f64,
    pub events: u64,
}

#[derive(Serialize)]
struct Versions {
    ringosc: &'static str,
    ringosc_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: Kind,
    config: &'a ExperimentConfig,
    config_hash: String,
    t_end: f64,
    snapshots: &'a [f64],
    versions: Versions,
    started_unix: u64,
    elapsed_seconds: f64,
    resumed_from: Option<PathBuf>,
    seeds: Vec<SeedReport>,
}

/// Runs `work` for every seed on a pool of `workers` threads; results come
/// back in seed order.
pub(crate) fn per_seed<T, F>(run: &Resolved, seeds: &[u64], work: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(u64) -> Result<T, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| work(s)).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

pub fn run_experiment(run: &Resolved, resume: Option<PathBuf>) -> Result<(), CliError> {
    if resume.is_some() && !matches!(run.kind, Kind::Lattice | Kind::Correlation) {
        return Err(CliError::Config(format!(
            "--resume is not supported for {} runs",
            run.kind
        )));
    }
    create_dir(&run.out)?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let seeds = match run.kind {
        Kind::Ring => ring::run_rings(run)?,
        Kind::PeriodTable => {
            ring::run_period_table(run)?;
            Vec::new()
        }
        Kind::Lattice | Kind::Correlation => lattice::run_lattices(run, resume.as_deref())?,
        Kind::NeuronDemo => {
            demo::run_demo(run)?;
            Vec::new()
        }
        Kind::Validate => unreachable!("validate does not write artifacts"),
    };
    let manifest = Manifest {
        kind: run.kind,
        config: &run.config,
        config_hash: run.dynamics_hash(),
        t_end: run.t_end,
        snapshots: &run.snapshots,
        versions: Versions {
            ringosc: ringosc::VERSION,
            ringosc_cli: env!("CARGO_PKG_VERSION"),
        },
        started_unix,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        resumed_from: resume,
        seeds,
    };
    write_json(&run.out.join("manifest.json"), &manifest)
}
