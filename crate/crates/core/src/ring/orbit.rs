use serde::{Deserialize, Serialize};

use super::{make_ring, stable_period, RingError, RingSpec};
use crate::engine::{Engine, EngineLimits, EventRecord, StepOutcome};
use crate::network::{NetworkState, TransitionKind, FIRING};

/// Tolerance for equal transition times of synchronized neurons.
const SYNC_TOL: f64 = 1e-9;

pub fn pulse_count(y: &[u8]) -> usize {
    y.iter().filter(|&&b| b == FIRING).count()
}

/// Ring distances between consecutive firing neurons, starting from the
/// lowest-index pulse. Sums to `n` whenever a pulse exists.
pub fn pulse_separations(y: &[u8]) -> Vec<usize> {
    let n = y.len();
    let firing: Vec<usize> = (0..n).filter(|&i| y[i] == FIRING).collect();
    (0..firing.len())
        .map(|j| {
            let next = firing[(j + 1) % firing.len()];
            (next + n - firing[j]) % n
        })
        .map(|gap| if gap == 0 { n } else { gap })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitParams {
    /// Simulated time discarded before looking for recurrence.
    pub burn_in: f64,
    /// Time budget after which detection gives up.
    pub max_time: f64,
    /// Voltage and period agreement required between reference events.
    pub recur_tol: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            burn_in: 50.0,
            max_time: 1000.0,
            recur_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitCharacterization {
    pub k: usize,
    pub period: f64,
    pub duty: f64,
    /// Time of the last reference event (neuron 0 starting to fire).
    pub anchor_time: f64,
}

fn starts_firing(record: &EventRecord, neuron: usize) -> bool {
    let mut started = false;
    for (i, kind) in record.transitions() {
        if i == neuron {
            started = kind == TransitionKind::InputDrivenStart;
        }
    }
    started
}

/// Runs a ring until its trajectory recurs at the reference event (neuron 0
/// starting to fire). Returns `Ok(None)` if the ring falls silent.
pub fn detect_orbit(
    spec: &RingSpec,
    state: &NetworkState,
    params: &OrbitParams,
) -> Result<Option<OrbitCharacterization>, RingError> {
    let graph = make_ring(spec)?;
    let limits = EngineLimits {
        allow_odd_cycles: spec.allow_odd,
        ..EngineLimits::default()
    };
    let mut engine = Engine::new(&graph, state, spec.cfg, limits)?;
    let deadline = state.t + params.max_time;
    engine.advance_with((state.t + params.burn_in).min(deadline), |_, _| {})?;

    let mut previous: Option<(f64, NetworkState)> = None;
    let mut last_period: Option<f64> = None;
    loop {
        match engine.next_event_time() {
            None => return Ok(None),
            Some(t) if t > deadline => {
                return Err(RingError::NotConverged {
                    time: deadline,
                    pulses: engine.firing_count(),
                })
            }
            Some(_) => {}
        }
        let StepOutcome::Event(record) = engine.step()? else {
            return Ok(None);
        };
        if !starts_firing(&record, 0) {
            continue;
        }
        let now = engine.state();
        if let Some((t_prev, before)) = &previous {
            let period = record.time - t_prev;
            let recurs = before.y == now.y
                && before
                    .v
                    .iter()
                    .zip(&now.v)
                    .all(|(a, b)| (a - b).abs() <= params.recur_tol);
            let steady = last_period
                .is_some_and(|p| (p - period).abs() <= params.recur_tol * period.max(1.0));
            if recurs && steady {
                let k = pulse_count(&now.y);
                return Ok(Some(OrbitCharacterization {
                    k,
                    period,
                    duty: k as f64 / spec.n as f64,
                    anchor_time: record.time,
                }));
            }
            last_period = Some(period);
        }
        previous = Some((record.time, now));
    }
}

/// Fraction of `[start, end]` each neuron spends firing, given the outputs at
/// `start` and the events that follow.
pub fn duty_cycles(
    initial_y: &[u8],
    events: &[EventRecord],
    start: f64,
    end: f64,
) -> Result<Vec<f64>, RingError> {
    if !(end > start) {
        return Err(RingError::EmptyWindow { start, end });
    }
    let mut y = initial_y.to_vec();
    let mut since = vec![start; y.len()];
    let mut firing_time = vec![0.0; y.len()];
    for record in events.iter().filter(|r| r.time > start && r.time <= end) {
        for (i, kind) in record.transitions() {
            let next = kind.new_output();
            if y[i] == FIRING && next != FIRING {
                firing_time[i] += record.time - since[i];
            }
            if y[i] != FIRING && next == FIRING {
                since[i] = record.time;
            }
            y[i] = next;
        }
    }
    for i in 0..y.len() {
        if y[i] == FIRING {
            firing_time[i] += end - since[i];
        }
    }
    Ok(firing_time.into_iter().map(|f| f / (end - start)).collect())
}

/// Exact state on the `k`-pulse orbit at phase `theta` (in cycles), using the
/// analytic stable period.
pub fn on_orbit_state(spec: &RingSpec, k: usize, theta: f64) -> Result<NetworkState, RingError> {
    spec.validate()?;
    let period = stable_period(spec.n, k, spec.cfg.v_thl).ok_or(RingError::NoPeriod {
        n: spec.n,
        k,
        v_thl: spec.cfg.v_thl,
    })?;
    on_orbit_state_with_period(spec, k, theta, period * spec.cfg.tau)
}

/// Exact state on the `k`-pulse orbit of period `period`. At `theta = 0`
/// neuron 0 has just started firing; neuron `i` lags it by `i k / n` of a
/// period.
pub fn on_orbit_state_with_period(
    spec: &RingSpec,
    k: usize,
    theta: f64,
    period: f64,
) -> Result<NetworkState, RingError> {
    spec.validate()?;
    let n = spec.n;
    if k == 0 || k > n / 2 {
        return Err(RingError::PulseCount { n, k, max: n / 2 });
    }
    let cfg = &spec.cfg;
    let fire = k as f64 * period / n as f64;
    let wait = (n - 2 * k) as f64 * period / n as f64;
    // Voltage when the parent starts firing, then when this neuron does.
    let v1 = 1.0 - cfg.v_thl * (-wait / cfg.tau).exp();
    let v2 = v1 * (-fire / cfg.tau).exp();
    let drive = 1.0 - v2;
    if drive < cfg.v_thh {
        return Err(RingError::OrbitInfeasible { k, period, drive });
    }
    let theta = theta.rem_euclid(1.0);
    let mut v = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let offset = (i * k) % n;
        let position = if theta == 0.0 {
            ((n - offset) % n) as f64
        } else {
            let a = theta * n as f64 - offset as f64;
            if a < 0.0 {
                a + n as f64
            } else {
                a
            }
        };
        let elapsed = position / n as f64 * period;
        if position < k as f64 {
            y.push(FIRING);
            v.push(1.0 + (v2 - 1.0) * (-elapsed / cfg.tau).exp());
        } else if elapsed < fire + wait {
            y.push(1);
            v.push(1.0 - cfg.v_thl * (-(elapsed - fire) / cfg.tau).exp());
        } else {
            y.push(1);
            v.push(v1 * (-(elapsed - fire - wait) / cfg.tau).exp());
        }
    }
    Ok(NetworkState { v, y, t: 0.0 })
}

/// Output changes of one neuron as `(time, new_output)`.
pub fn transition_times(events: &[EventRecord], neuron: usize) -> Vec<(f64, u8)> {
    events
        .iter()
        .flat_map(|r| {
            r.transitions()
                .filter(move |&(i, _)| i == neuron)
                .map(move |(_, kind)| (r.time, kind.new_output()))
        })
        .collect()
}

/// Whether every pair of neurons `n / gcd(n, k)` apart changes output at the
/// same instants throughout `events`.
pub fn gcd_sync_check(spec: &RingSpec, k: usize, events: &[EventRecord]) -> bool {
    let n = spec.n;
    let distance = n / gcd(n, k.max(1));
    if distance == n {
        return true;
    }
    (0..n).all(|i| {
        let a = transition_times(events, i);
        let b = transition_times(events, (i + distance) % n);
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(p, q)| p.1 == q.1 && (p.0 - q.0).abs() <= SYNC_TOL)
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
