use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ringosc::correlation::{aggregate_timeseries, correlation_timeseries, SnapshotFit};
use ringosc::io::{
    read_phase_field_csv, write_edge_list, write_phase_field_csv, write_rows, write_state_json,
    write_xi_csv,
};
use ringosc::lattice::{lattice_random_state, LatticeGraph};
use ringosc::phase::{dominant_cycle, phase_field, PhaseField, PhaseParams};
use ringosc::{Engine, EngineLimits};
use serde::Serialize;

use super::{per_seed, SeedReport};
use crate::checkpoint::Checkpoint;
use crate::config::{Kind, Resolved};
use crate::error::CliError;
use crate::output::{create_dir, seed_dir, time_stem, write_atomic, write_json};

const EVENT_HEADER: &[u8] = b"time,neuron,kind\n";

pub(super) fn run_lattices(
    run: &Resolved,
    resume: Option<&Path>,
) -> Result<Vec<SeedReport>, CliError> {
    let lattice = run
        .config
        .lattice
        .build()
        .map_err(|e| CliError::Config(format!("lattice: {e}")))?;
    let hash = run.dynamics_hash();
    let checkpoint = match resume {
        Some(path) => {
            let c = Checkpoint::load(path)?;
            c.check_config(&hash, path)?;
            if c.engine.y.len() != lattice.neuron_count() {
                return Err(CliError::Config(format!(
                    "{}: checkpoint does not match the lattice",
                    path.display()
                )));
            }
            Some(c)
        }
        None => None,
    };
    write_json(&run.out.join("lattice.json"), &run.config.lattice)?;
    write_atomic(&run.out.join("edges.csv"), |w| {
        Ok(write_edge_list(&lattice.graph, w)?)
    })?;

    let seeds = match &checkpoint {
        Some(c) => vec![c.seed],
        None => run.config.seeds.clone(),
    };
    let reports = per_seed(run, &seeds, |seed| {
        simulate_seed(run, &lattice, seed, checkpoint.as_ref(), &hash)
    })?;
    aggregate(run)?;
    Ok(reports)
}

fn snapshot_paths(dir: &Path, t: f64) -> (PathBuf, PathBuf) {
    let stem = time_stem(t);
    let snaps = dir.join("snapshots");
    (
        snaps.join(format!("{stem}.state.json")),
        snaps.join(format!("{stem}.phase.csv")),
    )
}

/// Appends event rows to the log, remembering the first write error.
struct EventLog {
    file: Option<BufWriter<File>>,
    path: PathBuf,
    error: Option<std::io::Error>,
}

impl EventLog {
    fn open(
        path: PathBuf,
        enabled: bool,
        resume_at: Option<Option<u64>>,
    ) -> Result<Self, CliError> {
        if !enabled {
            return Ok(Self {
                file: None,
                path,
                error: None,
            });
        }
        let io = |e: std::io::Error| CliError::io(path.display(), e);
        let file = match resume_at {
            None => {
                let mut f = File::create(&path).map_err(io)?;
                f.write_all(EVENT_HEADER).map_err(io)?;
                f
            }
            Some(None) => {
                return Err(CliError::Config(
                    "write_events is set but the checkpoint was taken without an event log".into(),
                ))
            }
            Some(Some(len)) => {
                let mut f = OpenOptions::new().write(true).open(&path).map_err(io)?;
                if f.metadata().map_err(io)?.len() < len {
                    return Err(CliError::Io(format!(
                        "{}: event log is shorter than the checkpoint",
                        path.display()
                    )));
                }
                f.set_len(len).map_err(io)?;
                f.seek(SeekFrom::End(0)).map_err(io)?;
                f
            }
        };
        Ok(Self {
            file: Some(BufWriter::new(file)),
            path,
            error: None,
        })
    }

    fn record(&mut self, record: &ringosc::EventRecord) {
        let (Some(f), None) = (self.file.as_mut(), self.error.as_ref()) else {
            return;
        };
        for (neuron, kind) in record.transitions() {
            if let Err(e) = writeln!(f, "{},{neuron},{}", record.time, kind.as_str()) {
                self.error = Some(e);
                return;
            }
        }
    }

    /// Flushes and returns the log length.
    fn sync(&mut self) -> Result<Option<u64>, CliError> {
        if let Some(e) = self.error.take() {
            return Err(CliError::io(self.path.display(), e));
        }
        let Some(f) = self.file.as_mut() else {
            return Ok(None);
        };
        f.flush()
            .map_err(|e| CliError::io(self.path.display(), e))?;
        let len = f
            .get_ref()
            .metadata()
            .map_err(|e| CliError::io(self.path.display(), e))?
            .len();
        Ok(Some(len))
    }
}

fn simulate_seed(
    run: &Resolved,
    lattice: &LatticeGraph,
    seed: u64,
    checkpoint: Option<&Checkpoint>,
    hash: &str,
) -> Result<SeedReport, CliError> {
    let clock = Instant::now();
    let cfg = run.config.neuron;
    let limits = EngineLimits::default();
    let dir = seed_dir(&run.out, seed);
    create_dir(&dir.join("snapshots"))?;
    let engine_err = |e| CliError::engine(e, seed, Some(lattice));

    let mut engine = match checkpoint {
        Some(c) => {
            Engine::from_snapshot(&lattice.graph, &c.engine, cfg, limits).map_err(engine_err)?
        }
        None => {
            let init = lattice_random_state(lattice, &cfg, run.config.fraction, seed)
                .map_err(|e| CliError::Config(format!("lattice: {e}")))?;
            write_atomic(&dir.join("initial_state.json"), |w| {
                Ok(write_state_json(&init.state, w)?)
            })?;
            Engine::new(&lattice.graph, &init.state, cfg, limits).map_err(engine_err)?
        }
    };
    let mut events = EventLog::open(
        dir.join("events.csv"),
        run.config.write_events,
        checkpoint.map(|c| c.events_bytes),
    )?;
    let params = PhaseParams {
        orbit: run.config.orbit.phase_params(),
    };
    let save = |engine: &Engine, events: &mut EventLog| -> Result<(), CliError> {
        let bytes = events.sync()?;
        Checkpoint::new(hash.to_string(), seed, engine.snapshot(), bytes)
            .save(&dir.join("checkpoint.json"))
    };

    let start = engine.time();
    for &t in run.snapshots.iter().filter(|&&t| t > start) {
        engine
            .advance_with(t, |_, r| events.record(r))
            .map_err(engine_err)?;
        let state = engine.state();
        let field = phase_field(lattice, &state, &cfg, &params)
            .map_err(|e| CliError::Engine(format!("seed {seed}: {e}")))?;
        let (state_path, phase_path) = snapshot_paths(&dir, t);
        write_atomic(&state_path, |w| Ok(write_state_json(&state, w)?))?;
        write_atomic(&phase_path, |w| Ok(write_phase_field_csv(&field, w)?))?;
        save(&engine, &mut events)?;
    }
    if engine.time() < run.t_end {
        engine
            .advance_with(run.t_end, |_, r| events.record(r))
            .map_err(engine_err)?;
        save(&engine, &mut events)?;
    }
    events.sync()?;
    write_atomic(&dir.join("final_state.json"), |w| {
        Ok(write_state_json(&engine.state(), w)?)
    })?;
    Ok(SeedReport {
        seed,
        seconds: clock.elapsed().as_secs_f64(),
        events: engine.events_processed(),
    })
}

#[derive(Serialize)]
struct DominantRow {
    seed: u64,
    t: f64,
    k_dom: Option<usize>,
    converged_fraction: f64,
    /// `k:count` pairs separated by `;`.
    histogram: String,
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    d: usize,
    c: f64,
    pair_count: usize,
}

#[derive(Serialize)]
struct FitRow {
    t: f64,
    status: &'static str,
    xi: Option<f64>,
    amplitude: Option<f64>,
    r_squared: Option<f64>,
    d_first: Option<usize>,
    d_last: Option<usize>,
    floor: Option<f64>,
    reason: String,
}

fn load_fields(run: &Resolved, seed: u64) -> Result<Option<Vec<PhaseField>>, CliError> {
    let dir = seed_dir(&run.out, seed);
    let mut fields = Vec::new();
    for &t in &run.snapshots {
        let (_, path) = snapshot_paths(&dir, t);
        if !path.exists() {
            return Ok(None);
        }
        let file = File::open(&path).map_err(|e| CliError::io(path.display(), e))?;
        fields.push(read_phase_field_csv(std::io::BufReader::new(file), t)?);
    }
    Ok(Some(fields))
}

/// Post-pass over the per-seed snapshot files of every configured seed.
fn aggregate(run: &Resolved) -> Result<(), CliError> {
    let seeds = run.config.seeds.clone();
    let per = per_seed(run, &seeds, |seed| {
        let Some(fields) = load_fields(run, seed)? else {
            eprintln!("seed {seed}: snapshots incomplete, left out of the aggregate");
            return Ok(None);
        };
        let dir = seed_dir(&run.out, seed);
        let dominant: Vec<DominantRow> = fields
            .iter()
            .map(|f| {
                let (k_dom, histogram) = dominant_cycle(f);
                DominantRow {
                    seed,
                    t: f.snapshot_time,
                    k_dom,
                    converged_fraction: f.converged_fraction(),
                    histogram: histogram_string(&histogram),
                }
            })
            .collect();
        if run.kind != Kind::Correlation {
            return Ok(Some((dominant, None)));
        }
        let series = correlation_timeseries(&fields, run.d_max(), &run.config.fit)
            .map_err(|e| CliError::Config(format!("d_max: {e}")))?;
        let curve_rows = series.iter().flat_map(|p| {
            p.curve.entries.iter().map(move |e| CurveRow {
                t: p.t,
                d: e.d,
                c: e.c,
                pair_count: e.pair_count,
            })
        });
        write_atomic(&dir.join("correlation.csv"), |w| {
            Ok(write_rows(curve_rows, w)?)
        })?;
        let fit_rows = series.iter().map(|p| match &p.fit {
            SnapshotFit::Fit(f) => FitRow {
                t: p.t,
                status: "fit",
                xi: Some(f.xi),
                amplitude: Some(f.amplitude),
                r_squared: Some(f.r_squared),
                d_first: Some(f.d_range.0),
                d_last: Some(f.d_range.1),
                floor: Some(f.floor),
                reason: String::new(),
            },
            other => FitRow {
                t: p.t,
                status: if *other == SnapshotFit::Saturated {
                    "saturated"
                } else {
                    "failed"
                },
                xi: None,
                amplitude: None,
                r_squared: None,
                d_first: None,
                d_last: None,
                floor: None,
                reason: match other {
                    SnapshotFit::Failed { reason } => reason.clone(),
                    _ => String::new(),
                },
            },
        });
        write_atomic(&dir.join("xi.csv"), |w| Ok(write_rows(fit_rows, w)?))?;
        Ok(Some((dominant, Some(series))))
    })?;

    let mut dominant = Vec::new();
    let mut series = Vec::new();
    for (rows, s) in per.into_iter().flatten() {
        dominant.extend(rows);
        series.extend(s);
    }
    write_atomic(&run.out.join("dominant.csv"), |w| {
        Ok(write_rows(dominant, w)?)
    })?;
    if run.kind == Kind::Correlation {
        let summary = aggregate_timeseries(&series);
        write_atomic(&run.out.join("xi.csv"), |w| Ok(write_xi_csv(&summary, w)?))?;
    }
    Ok(())
}

fn histogram_string(h: &BTreeMap<usize, usize>) -> String {
    h.iter()
        .map(|(k, c)| format!("{k}:{c}"))
        .collect::<Vec<_>>()
        .join(";")
}
