use std::path::Path;

use ringosc::io::{read_state_json, write_rows};
use ringosc::network::validate_state;
use ringosc::ring::{make_ring, neuron_response_demo, square_wave};
use ringosc::NetworkGraph;

use crate::config::Resolved;
use crate::error::CliError;
use crate::output::write_atomic;

pub(super) fn run_demo(run: &Resolved) -> Result<(), CliError> {
    let d = &run.config.demo;
    let input = square_wave(d.half_period, run.t_end);
    let trace = neuron_response_demo(&input, d.v0, d.beta, run.config.neuron.tau, d.dt, run.t_end);
    write_atomic(&run.out.join("neuron_demo.csv"), |w| {
        Ok(write_rows(trace, w)?)
    })
}

/// Builds the network a config describes and optionally checks a state file
/// against it. Returns a human-readable report.
pub fn validate(run: &Resolved, lattice: bool, state: Option<&Path>) -> Result<String, CliError> {
    let (graph, what): (NetworkGraph, String) = if lattice {
        let l = run
            .config
            .lattice
            .build()
            .map_err(|e| CliError::Config(format!("lattice: {e}")))?;
        let what = format!("{}x{} lattice of {} rings", l.rows, l.cols, l.site_count());
        (l.graph, what)
    } else {
        let spec = run.ring_spec();
        let g = make_ring(&spec).map_err(|e| CliError::Config(format!("ring: {e}")))?;
        (g, format!("{}-ring", spec.n))
    };
    let mut report = format!(
        "config ok: {what}, {} neurons, {} edges, hash {}\n",
        graph.len(),
        graph.edge_count(),
        run.dynamics_hash()
    );
    if let Some(path) = state {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
        let s = read_state_json(std::io::BufReader::new(file))
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let violations = validate_state(&graph, &s, &run.config.neuron);
        if !violations.is_empty() {
            let list: Vec<String> = violations
                .iter()
                .take(20)
                .map(|v| format!("  {v}"))
                .collect();
            return Err(CliError::Engine(format!(
                "{}: {} violations\n{}",
                path.display(),
                violations.len(),
                list.join("\n")
            )));
        }
        report.push_str(&format!(
            "state ok: {} firing at t = {}\n",
            s.firing_count(),
            s.t
        ));
    }
    Ok(report)
}
