use std::collections::BTreeMap;
use std::time::Instant;

use ringosc::io::{write_event_log, write_rows, write_state_json};
use ringosc::network::{random_initial_state, FIRING};
use ringosc::ring::{
    detect_orbit, make_ring, on_orbit_state, period_polynomial_roots, stable_period,
    transition_times, RingError, RingSpec,
};
use ringosc::{Engine, EngineLimits, SchmittConfig};
use serde::Serialize;

use super::{per_seed, SeedReport};
use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{create_dir, seed_dir, write_atomic};

#[derive(Clone, Debug, Serialize)]
struct OrbitRow {
    seed: u64,
    n: usize,
    initial_fraction: f64,
    status: &'static str,
    k: Option<usize>,
    period: Option<f64>,
    duty: Option<f64>,
    anchor_time: Option<f64>,
}

#[derive(Serialize)]
struct OrbitTableRow {
    n: usize,
    k: usize,
    runs: usize,
    #[serde(rename = "P_analytic")]
    p_analytic: Option<f64>,
    #[serde(rename = "P_empirical")]
    p_empirical: f64,
    rel_err: Option<f64>,
}

fn ring_error(e: RingError, seed: u64) -> CliError {
    match e {
        RingError::Engine(err) => CliError::engine(err, seed, None),
        other => CliError::Engine(format!("seed {seed}: {other}")),
    }
}

pub(super) fn run_rings(run: &Resolved) -> Result<Vec<SeedReport>, CliError> {
    let spec = run.ring_spec();
    let cfg = run.config.neuron;
    let graph = make_ring(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let limits = EngineLimits {
        allow_odd_cycles: spec.allow_odd,
        ..EngineLimits::default()
    };
    let results = per_seed(run, &run.config.seeds, |seed| {
        let clock = Instant::now();
        let index = run
            .config
            .seeds
            .iter()
            .position(|&s| s == seed)
            .unwrap_or(0);
        let init = random_initial_state(&graph, &cfg, run.ring_fraction(index), seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut row = OrbitRow {
            seed,
            n: spec.n,
            initial_fraction: init.achieved_fraction,
            status: "quiescent",
            k: None,
            period: None,
            duty: None,
            anchor_time: None,
        };
        match detect_orbit(&spec, &init.state, &run.config.orbit.ring_params()) {
            Ok(Some(orbit)) => {
                row.status = "periodic";
                row.k = Some(orbit.k);
                row.period = Some(orbit.period);
                row.duty = Some(orbit.duty);
                row.anchor_time = Some(orbit.anchor_time);
            }
            Ok(None) => {}
            Err(RingError::NotConverged { .. }) => row.status = "not_converged",
            Err(e) => return Err(ring_error(e, seed)),
        }

        let dir = seed_dir(&run.out, seed);
        create_dir(&dir)?;
        let mut engine = Engine::new(&graph, &init.state, cfg, limits)
            .map_err(|e| CliError::engine(e, seed, None))?;
        write_atomic(&dir.join("initial_state.json"), |w| {
            Ok(write_state_json(&init.state, w)?)
        })?;
        if run.config.write_events {
            let log = engine
                .run_until(run.t_end)
                .map_err(|e| CliError::engine(e, seed, None))?;
            write_atomic(&dir.join("events.csv"), |w| Ok(write_event_log(&log, w)?))?;
        } else {
            engine
                .advance_with(run.t_end, |_, _| {})
                .map_err(|e| CliError::engine(e, seed, None))?;
        }
        write_atomic(&dir.join("final_state.json"), |w| {
            Ok(write_state_json(&engine.state(), w)?)
        })?;
        let report = SeedReport {
            seed,
            seconds: clock.elapsed().as_secs_f64(),
            events: engine.events_processed(),
        };
        Ok((row, report))
    })?;

    let (rows, reports): (Vec<OrbitRow>, Vec<SeedReport>) = results.into_iter().unzip();
    write_atomic(&run.out.join("orbits.csv"), |w| {
        Ok(write_rows(rows.iter().cloned(), w)?)
    })?;

    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if let (Some(k), Some(p)) = (r.k, r.period) {
            by_k.entry(k).or_default().push(p);
        }
    }
    let table: Vec<OrbitTableRow> = by_k
        .into_iter()
        .map(|(k, periods)| {
            let p_empirical = periods.iter().sum::<f64>() / periods.len() as f64;
            let p_analytic = stable_period(spec.n, k, cfg.v_thl);
            OrbitTableRow {
                n: spec.n,
                k,
                runs: periods.len(),
                p_analytic,
                p_empirical,
                rel_err: p_analytic.map(|p| ((p_empirical - p) / p).abs()),
            }
        })
        .collect();
    write_atomic(&run.out.join("orbit_table.csv"), |w| {
        Ok(write_rows(table, w)?)
    })?;
    Ok(reports)
}

#[derive(Serialize)]
struct PeriodRow {
    n: usize,
    k: usize,
    x_root: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "P_empirical")]
    p_empirical: Option<f64>,
    rel_err: Option<f64>,
    note: String,
}

/// Mean interval between firing onsets of neuron 0, started on the orbit.
fn empirical_period(
    spec: &RingSpec,
    cfg: SchmittConfig,
    k: usize,
    p: f64,
    periods: usize,
) -> Result<f64, RingError> {
    let graph = make_ring(spec)?;
    let start = on_orbit_state(spec, k, 0.0)?;
    let mut engine = Engine::new(&graph, &start, cfg, EngineLimits::default())?;
    let log = engine.run_until((periods as f64 + 1.5) * p)?;
    let onsets: Vec<f64> = transition_times(&log, 0)
        .into_iter()
        .filter(|&(_, y)| y == FIRING)
        .map(|(t, _)| t)
        .collect();
    if onsets.len() < periods + 1 {
        return Err(RingError::NotConverged {
            time: engine.time(),
            pulses: engine.firing_count(),
        });
    }
    Ok((onsets[periods] - onsets[0]) / periods as f64)
}

pub(super) fn run_period_table(run: &Resolved) -> Result<(), CliError> {
    let cfg = run.config.neuron;
    let mut rows = Vec::new();
    for &n in &run.config.period_table.n {
        let spec = RingSpec::new(n, cfg);
        for k in 1..=n / 2 {
            let roots = period_polynomial_roots(n, k, cfg.v_thl);
            let (Some(&x), Some(p)) = (roots.first(), stable_period(n, k, cfg.v_thl)) else {
                continue;
            };
            let (p_empirical, note) =
                match empirical_period(&spec, cfg, k, p, run.config.period_table.periods) {
                    Ok(pe) => (Some(pe), String::new()),
                    Err(e) => (None, e.to_string()),
                };
            rows.push(PeriodRow {
                n,
                k,
                x_root: x,
                p,
                p_empirical,
                rel_err: p_empirical.map(|pe| ((pe - p) / p).abs()),
                note,
            });
        }
    }
    write_atomic(&run.out.join("period_table.csv"), |w| {
        Ok(write_rows(rows, w)?)
    })
}
