//! Single ring oscillators: construction, state counting, periodic orbits.

mod demo;
mod necklace;
mod orbit;
mod period;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::network::{NetworkError, NetworkGraph, SchmittConfig};

pub use demo::{neuron_response_demo, square_wave, DemoSample};
pub use necklace::necklace_count;
pub use orbit::{
    detect_orbit, duty_cycles, gcd_sync_check, on_orbit_state, on_orbit_state_with_period,
    pulse_count, pulse_separations, transition_times, OrbitCharacterization, OrbitParams,
};
pub use period::{period_polynomial, period_polynomial_roots, stable_period};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RingError {
    #[error("ring size must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("a ring of odd size {0} is an odd cycle")]
    OddRing(usize),
    #[error("pulse count {k} is outside 1..={max} for a {n}-ring")]
    PulseCount { n: usize, k: usize, max: usize },
    #[error("no interior period root for n = {n}, k = {k}, v_thl = {v_thl}")]
    NoPeriod { n: usize, k: usize, v_thl: f64 },
    #[error("{k}-pulse orbit of period {period} is infeasible: drive {drive} at firing onset is below v_thh")]
    OrbitInfeasible { k: usize, period: f64, drive: f64 },
    #[error("no periodic orbit detected by t = {time} ({pulses} pulses remain)")]
    NotConverged { time: f64, pulses: usize },
    #[error("necklace count is only supported for 1 <= n <= 90, got {0}")]
    NecklaceRange(usize),
    #[error("averaging window [{start}, {end}] is empty")]
    EmptyWindow { start: f64, end: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// An `n`-ring oscillator: neuron `i` feeds neuron `i + 1 mod n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub n: usize,
    pub cfg: SchmittConfig,
    #[serde(default)]
    pub allow_odd: bool,
}

impl RingSpec {
    pub fn new(n: usize, cfg: SchmittConfig) -> Self {
        Self {
            n,
            cfg,
            allow_odd: false,
        }
    }

    pub fn validate(&self) -> Result<(), RingError> {
        self.cfg.validate()?;
        if self.n < 2 {
            return Err(RingError::TooSmall(self.n));
        }
        if self.n % 2 == 1 && !self.allow_odd {
            return Err(RingError::OddRing(self.n));
        }
        Ok(())
    }

    /// Largest pulse count, `floor(n / 2)`.
    pub fn max_pulses(&self) -> usize {
        self.n / 2
    }
}

pub fn make_ring(spec: &RingSpec) -> Result<NetworkGraph, RingError> {
    spec.validate()?;
    let n = spec.n;
    Ok(NetworkGraph::from_edges(
        n,
        (0..n).map(|i| (i, (i + 1) % n)),
    )?)
}
