//! Numerical phase reduction of the rings in a lattice.
//!
//! Each ring is cut out of the lattice, simulated in isolation until it lands
//! on a periodic orbit, and assigned the orbit's pulse count `k` and the phase
//! `theta` (in cycles) at which it entered.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{settle_state, EngineLimits};
use crate::lattice::{homogeneity_coloring, LatticeError, LatticeGraph};
use crate::network::{NetworkGraph, NetworkState, SchmittConfig};
use crate::ring::{detect_orbit, make_ring, pulse_count, OrbitParams, RingError, RingSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingPhase {
    /// Pulse count of the limiting orbit, 0 for a silent ring.
    pub k: usize,
    /// Phase in cycles, in `[0, 1)`.
    pub theta: f64,
    pub converged: bool,
}

impl RingPhase {
    pub const QUIESCENT: Self = Self {
        k: 0,
        theta: 0.0,
        converged: true,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub orbit: OrbitParams,
}

impl Default for PhaseParams {
    fn default() -> Self {
        Self {
            orbit: OrbitParams {
                max_time: 200.0,
                ..OrbitParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub rows: usize,
    pub cols: usize,
    pub snapshot_time: f64,
    /// Row-major.
    pub sites: Vec<RingPhase>,
}

impl PhaseField {
    pub fn get(&self, row: usize, col: usize) -> &RingPhase {
        &self.sites[row * self.cols + col]
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.sites.is_empty() {
            return 0.0;
        }
        self.sites.iter().filter(|s| s.converged).count() as f64 / self.sites.len() as f64
    }
}

/// Circular distance between two phases in cycles, in `[0, 0.5]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Copies one site's ring out of a lattice state as a standalone ring with
/// `t = 0`, in traversal order from the anchor.
///
/// A shared neuron may be held dormant in the lattice by its other ring's
/// parent; without that parent its output can be inconsistent, so the copy is
/// settled with an instantaneous cascade before it is returned.
pub fn extract_ring_state(
    lattice: &LatticeGraph,
    state: &NetworkState,
    site: usize,
    cfg: &SchmittConfig,
) -> Result<NetworkState, LatticeError> {
    let ring = &lattice.site_rings[site];
    let spec = RingSpec::new(ring.len(), *cfg);
    let graph = make_ring(&spec)?;
    extract_with_graph(ring, &graph, state, cfg)
}

fn extract_with_graph(
    ring: &[usize],
    graph: &NetworkGraph,
    state: &NetworkState,
    cfg: &SchmittConfig,
) -> Result<NetworkState, LatticeError> {
    let mut isolated = NetworkState {
        v: ring.iter().map(|&i| state.v[i]).collect(),
        y: ring.iter().map(|&i| state.y[i]).collect(),
        t: 0.0,
    };
    settle_state(&mut isolated, graph, cfg, &EngineLimits::default()).map_err(RingError::from)?;
    Ok(isolated)
}

/// Cycle type and phase of an isolated ring state. The phase is 0 at the
/// instant neuron 0 starts firing on the limiting orbit and advances by
/// `t / P`.
pub fn ring_phase(
    spec: &RingSpec,
    ring_state: &NetworkState,
    params: &PhaseParams,
) -> Result<RingPhase, RingError> {
    match detect_orbit(spec, ring_state, &params.orbit) {
        Ok(None) => Ok(RingPhase::QUIESCENT),
        Ok(Some(orbit)) => Ok(RingPhase {
            k: orbit.k,
            theta: (-(orbit.anchor_time - ring_state.t) / orbit.period).rem_euclid(1.0) % 1.0,
            converged: true,
        }),
        Err(RingError::NotConverged { pulses, .. }) => Ok(RingPhase {
            k: pulses,
            theta: 0.0,
            converged: false,
        }),
        Err(e) => Err(e),
    }
}

/// Phase of every site at the state's time. Phases are shifted by
/// `colour(anchor) k / N` so that a synchronized global orbit reads as a
/// uniform field.
pub fn phase_field(
    lattice: &LatticeGraph,
    state: &NetworkState,
    cfg: &SchmittConfig,
    params: &PhaseParams,
) -> Result<PhaseField, LatticeError> {
    let offsets: Vec<usize> = match lattice.ring_size() {
        Some(n) => match homogeneity_coloring(&lattice.graph, n) {
            Ok(colours) => lattice.anchors.iter().map(|&a| colours[a]).collect(),
            Err(_) => vec![0; lattice.site_count()],
        },
        None => vec![0; lattice.site_count()],
    };
    let sites = (0..lattice.site_count())
        .into_par_iter()
        .map(|site| {
            let ring = &lattice.site_rings[site];
            let spec = RingSpec::new(ring.len(), *cfg);
            let graph = make_ring(&spec)?;
            let isolated = extract_with_graph(ring, &graph, state, cfg)?;
            let mut phase = ring_phase(&spec, &isolated, params)?;
            if phase.converged && phase.k > 0 {
                let shift = (offsets[site] * phase.k) as f64 / ring.len() as f64;
                phase.theta = (phase.theta + shift).rem_euclid(1.0) % 1.0;
            }
            Ok(phase)
        })
        .collect::<Result<Vec<_>, LatticeError>>()?;
    Ok(PhaseField {
        rows: lattice.rows,
        cols: lattice.cols,
        snapshot_time: state.t,
        sites,
    })
}

/// Modal cycle type over converged sites (ties go to the smaller `k`) and
/// the histogram of `k` over all sites.
pub fn dominant_cycle(field: &PhaseField) -> (Option<usize>, BTreeMap<usize, usize>) {
    let mut histogram = BTreeMap::new();
    let mut converged = BTreeMap::new();
    for site in &field.sites {
        *histogram.entry(site.k).or_insert(0) += 1;
        if site.converged {
            *converged.entry(site.k).or_insert(0usize) += 1;
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (&k, &count) in &converged {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((k, count));
        }
    }
    (best.map(|(k, _)| k), histogram)
}

/// Pulse count of every site ring in the lattice state, without simulation.
pub fn instantaneous_pulse_counts(lattice: &LatticeGraph, state: &NetworkState) -> Vec<usize> {
    lattice
        .site_rings
        .iter()
        .map(|ring| pulse_count(&ring.iter().map(|&i| state.y[i]).collect::<Vec<_>>()))
        .collect()
}
