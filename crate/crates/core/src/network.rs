//! Neuron model, directed network graph, and network state.
//!
//! Outputs follow the physical convention of an inverting Schmitt trigger:
//! `y = 0` means the neuron is firing (carrying a pulse), `y = 1` means it is
//! dormant. String-facing helpers such as [`NetworkState::pulse_string`]
//! expose the complement, where `1` marks a pulse.

use std::fmt;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Output value of a firing neuron.
pub const FIRING: u8 = 0;
/// Output value of a dormant neuron.
pub const DORMANT: u8 = 1;

/// Slack allowed on voltage range and threshold comparisons in
/// [`validate_state`].
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error(
        "thresholds must satisfy 0 < v_thl < v_thh < 1 (got v_thl = {v_thl}, v_thh = {v_thh})"
    )]
    Thresholds { v_thl: f64, v_thh: f64 },
    #[error("time constant must be positive (got {0})")]
    TimeConstant(f64),
    #[error("network must contain at least one neuron")]
    Empty,
    #[error("neuron index {index} out of range for a network of {len} neurons")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("self-loop on neuron {0}")]
    SelfLoop(usize),
    #[error("firing fraction must lie in [0, 1] (got {0})")]
    Fraction(f64),
}

/// Thresholds and time constant of the inverting Schmitt trigger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchmittConfig {
    /// Lower threshold: a firing neuron stops once `tau * dv/dt` decays to it.
    pub v_thl: f64,
    /// Upper threshold: a dormant neuron starts firing once `tau * dv/dt` reaches it.
    pub v_thh: f64,
    /// Capacitor time constant; the unit of simulation time.
    pub tau: f64,
}

impl Default for SchmittConfig {
    fn default() -> Self {
        Self {
            v_thl: 0.25,
            v_thh: 0.45,
            tau: 1.0,
        }
    }
}

impl SchmittConfig {
    pub fn new(v_thl: f64, v_thh: f64, tau: f64) -> Result<Self, NetworkError> {
        let cfg = Self { v_thl, v_thh, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.v_thl > 0.0 && self.v_thl < self.v_thh && self.v_thh < 1.0) {
            return Err(NetworkError::Thresholds {
                v_thl: self.v_thl,
                v_thh: self.v_thh,
            });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(NetworkError::TimeConstant(self.tau));
        }
        Ok(())
    }
}

/// Directed neuron graph. Edge `i -> j` means neuron `j` receives the output
/// of neuron `i`. Parent and child lists are kept sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    external_input: Vec<u8>,
}

impl NetworkGraph {
    /// Builds a graph from an edge list. Duplicate edges collapse to one.
    pub fn from_edges<I>(neuron_count: usize, edges: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if neuron_count == 0 {
            return Err(NetworkError::Empty);
        }
        let mut parents = vec![Vec::new(); neuron_count];
        let mut children = vec![Vec::new(); neuron_count];
        for (from, to) in edges {
            for index in [from, to] {
                if index >= neuron_count {
                    return Err(NetworkError::IndexOutOfRange {
                        index,
                        len: neuron_count,
                    });
                }
            }
            if from == to {
                return Err(NetworkError::SelfLoop(from));
            }
            children[from].push(to);
            parents[to].push(from);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            parents,
            children,
            external_input: vec![DORMANT; neuron_count],
        })
    }

    /// Sets the constant input bit seen by a neuron without parents.
    pub fn set_external_input(&mut self, neuron: usize, bit: u8) -> Result<(), NetworkError> {
        self.check_index(neuron)?;
        self.external_input[neuron] = u8::from(bit != 0);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, neuron: usize) -> &[usize] {
        &self.parents[neuron]
    }

    pub fn children(&self, neuron: usize) -> &[usize] {
        &self.children[neuron]
    }

    pub fn external_input(&self, neuron: usize) -> u8 {
        self.external_input[neuron]
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// All edges `(parent, child)` in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(from, list)| list.iter().map(move |&to| (from, to)))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children
            .get(from)
            .is_some_and(|list| list.binary_search(&to).is_ok())
    }

    pub(crate) fn check_index(&self, neuron: usize) -> Result<(), NetworkError> {
        if neuron >= self.len() {
            Err(NetworkError::IndexOutOfRange {
                index: neuron,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Whether the graph contains a directed cycle of odd length.
    ///
    /// A strongly connected digraph has an odd directed cycle exactly when it
    /// is not bipartite, so each component is 2-coloured over its internal
    /// edges.
    pub fn has_odd_cycle(&self) -> bool {
        let mut g = DiGraph::<(), ()>::with_capacity(self.len(), self.edge_count());
        let nodes: Vec<_> = (0..self.len()).map(|_| g.add_node(())).collect();
        for (from, to) in self.edges() {
            g.add_edge(nodes[from], nodes[to], ());
        }
        let mut component = vec![usize::MAX; self.len()];
        for (id, scc) in kosaraju_scc(&g).into_iter().enumerate() {
            for node in scc {
                component[node.index()] = id;
            }
        }
        let mut colour = vec![u8::MAX; self.len()];
        let mut stack = Vec::new();
        for start in 0..self.len() {
            if colour[start] != u8::MAX {
                continue;
            }
            colour[start] = 0;
            stack.push(start);
            while let Some(node) = stack.pop() {
                let next = colour[node] ^ 1;
                let neighbours = self.children[node].iter().chain(&self.parents[node]);
                for &other in neighbours {
                    if component[other] != component[node] {
                        continue;
                    }
                    if colour[other] == u8::MAX {
                        colour[other] = next;
                        stack.push(other);
                    } else if colour[other] != next {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Capacitor voltages, binary outputs, and elapsed time of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Capacitor voltage per neuron, as a fraction of the supply.
    pub v: Vec<f64>,
    /// Output per neuron: [`FIRING`] or [`DORMANT`].
    pub y: Vec<u8>,
    /// Elapsed time in units of tau.
    pub t: f64,
}

impl NetworkState {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn is_firing(&self, neuron: usize) -> bool {
        self.y[neuron] == FIRING
    }

    pub fn firing_count(&self) -> usize {
        self.y.iter().filter(|&&y| y == FIRING).count()
    }

    /// Complemented outputs: `1` for a pulse, `0` for a dormant neuron.
    pub fn pulse_string(&self) -> Vec<u8> {
        self.y.iter().map(|&y| 1 - y).collect()
    }

    /// Builds a state from a pulse string (`1` = firing) and voltages.
    pub fn from_pulse_string(pulses: &[u8], v: Vec<f64>, t: f64) -> Self {
        let y = pulses.iter().map(|&p| u8::from(p == 0)).collect();
        Self { v, y, t }
    }
}

/// The three ways a neuron's output can change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    /// A firing neuron stops because its derivative decayed to `v_thl`.
    #[serde(rename = "auto_stop")]
    AutonomousStop,
    /// A dormant neuron starts firing because its input rose to 1.
    #[serde(rename = "drive_start")]
    InputDrivenStart,
    /// A firing neuron stops because its input dropped to 0.
    #[serde(rename = "drive_stop")]
    InputDrivenStop,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AutonomousStop => "auto_stop",
            Self::InputDrivenStart => "drive_start",
            Self::InputDrivenStop => "drive_stop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto_stop" => Some(Self::AutonomousStop),
            "drive_start" => Some(Self::InputDrivenStart),
            "drive_stop" => Some(Self::InputDrivenStop),
            _ => None,
        }
    }

    /// Output value of the neuron right after this transition.
    pub fn new_output(self) -> u8 {
        match self {
            Self::InputDrivenStart => FIRING,
            Self::AutonomousStop | Self::InputDrivenStop => DORMANT,
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// AND over parent outputs: 0 if any parent fires, else 1. Neurons without
/// parents see their external input bit.
pub fn compute_input(graph: &NetworkGraph, y: &[u8], neuron: usize) -> Result<u8, NetworkError> {
    graph.check_index(neuron)?;
    Ok(input_of(graph, y, neuron))
}

#[inline]
pub(crate) fn input_of(graph: &NetworkGraph, y: &[u8], neuron: usize) -> u8 {
    let parents = graph.parents(neuron);
    if parents.is_empty() {
        graph.external_input(neuron)
    } else if parents.iter().any(|&p| y[p] == FIRING) {
        0
    } else {
        1
    }
}

/// Inverting Schmitt trigger with hysteresis, applied to `tau * dv/dt`.
#[inline]
pub fn schmitt_output(scaled_derivative: f64, y_prev: u8, cfg: &SchmittConfig) -> u8 {
    if scaled_derivative >= cfg.v_thh || (scaled_derivative >= cfg.v_thl && y_prev == FIRING) {
        FIRING
    } else {
        DORMANT
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    SizeMismatch {
        neurons: usize,
        voltages: usize,
        outputs: usize,
    },
    InvalidOutput {
        neuron: usize,
        value: u8,
    },
    VoltageRange {
        neuron: usize,
        v: f64,
    },
    /// Output disagrees with the Schmitt trigger applied to the current derivative.
    Inconsistent {
        neuron: usize,
        y: u8,
        scaled_derivative: f64,
    },
    AdjacentFiring {
        parent: usize,
        child: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SizeMismatch {
                neurons,
                voltages,
                outputs,
            } => write!(
                f,
                "size mismatch: {neurons} neurons, {voltages} voltages, {outputs} outputs"
            ),
            Self::InvalidOutput { neuron, value } => {
                write!(f, "neuron {neuron}: output {value} is not binary")
            }
            Self::VoltageRange { neuron, v } => {
                write!(f, "neuron {neuron}: voltage {v} outside [0, 1]")
            }
            Self::Inconsistent {
                neuron,
                y,
                scaled_derivative,
            } => write!(
                f,
                "neuron {neuron}: output {y} inconsistent with tau*dv/dt = {scaled_derivative}"
            ),
            Self::AdjacentFiring { parent, child } => {
                write!(f, "adjacent firing: {parent} -> {child} both fire")
            }
        }
    }
}

/// Reports every broken state invariant. An empty list means the state is valid.
pub fn validate_state(
    graph: &NetworkGraph,
    state: &NetworkState,
    cfg: &SchmittConfig,
) -> Vec<Violation> {
    let n = graph.len();
    if state.v.len() != n || state.y.len() != n {
        return vec![Violation::SizeMismatch {
            neurons: n,
            voltages: state.v.len(),
            outputs: state.y.len(),
        }];
    }
    let mut violations = Vec::new();
    for (neuron, &value) in state.y.iter().enumerate() {
        if value > 1 {
            violations.push(Violation::InvalidOutput { neuron, value });
        }
    }
    if !violations.is_empty() {
        return violations;
    }
    for neuron in 0..n {
        let v = state.v[neuron];
        if !(-VALIDATION_TOL..=1.0 + VALIDATION_TOL).contains(&v) {
            violations.push(Violation::VoltageRange { neuron, v });
        }
        let s = f64::from(input_of(graph, &state.y, neuron)) - v;
        let y = state.y[neuron];
        let consistent = if y == FIRING {
            s >= cfg.v_thl - VALIDATION_TOL
        } else {
            s < cfg.v_thh + VALIDATION_TOL
        };
        if !consistent {
            violations.push(Violation::Inconsistent {
                neuron,
                y,
                scaled_derivative: s,
            });
        }
    }
    for (parent, child) in graph.edges() {
        if state.y[parent] == FIRING && state.y[child] == FIRING {
            violations.push(Violation::AdjacentFiring { parent, child });
        }
    }
    violations
}

/// A random valid state together with the firing fraction actually reached.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomInit {
    pub state: NetworkState,
    pub achieved_fraction: f64,
}

/// Draws a random valid state with roughly `firing_fraction` of neurons firing.
///
/// Neurons are visited in a seeded random order and accepted as firing while
/// none of their parents or children fires, until the target count is met.
/// Voltages are then drawn so every neuron is consistent with its output.
pub fn random_initial_state(
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    firing_fraction: f64,
    seed: u64,
) -> Result<RandomInit, NetworkError> {
    if !(0.0..=1.0).contains(&firing_fraction) {
        return Err(NetworkError::Fraction(firing_fraction));
    }
    let n = graph.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (firing_fraction * n as f64).round() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut y = vec![DORMANT; n];
    let mut count = 0;
    for &neuron in &order {
        if count >= target {
            break;
        }
        let blocked = graph
            .parents(neuron)
            .iter()
            .chain(graph.children(neuron))
            .any(|&other| y[other] == FIRING);
        if !blocked {
            y[neuron] = FIRING;
            count += 1;
        }
    }

    let mut v = vec![0.0; n];
    for neuron in 0..n {
        v[neuron] = if y[neuron] == FIRING {
            rng.random_range(0.0..1.0 - cfg.v_thl)
        } else if graph.parents(neuron).iter().any(|&p| y[p] == FIRING) {
            rng.random_range(0.0..1.0)
        } else if input_of(graph, &y, neuron) == 1 {
            rng.random_range(1.0 - cfg.v_thl..1.0)
        } else {
            // Parentless neuron held low by its external input.
            rng.random_range(0.0..1.0)
        };
    }
    Ok(RandomInit {
        state: NetworkState { v, y, t: 0.0 },
        achieved_fraction: count as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> NetworkGraph {
        NetworkGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn input_is_and_over_parents() {
        let g = NetworkGraph::from_edges(3, [(0, 2), (1, 2)]).unwrap();
        assert_eq!(compute_input(&g, &[1, 1, 1], 2).unwrap(), 1);
        assert_eq!(compute_input(&g, &[1, 0, 1], 2).unwrap(), 0);
        assert_eq!(compute_input(&g, &[1, 1, 1], 0).unwrap(), 1);
        assert!(compute_input(&g, &[1, 1, 1], 3).is_err());

        let mut g = g;
        g.set_external_input(0, 0).unwrap();
        assert_eq!(compute_input(&g, &[1, 1, 1], 0).unwrap(), 0);
    }

    #[test]
    fn input_matches_and_exhaustively() {
        // Neuron 3 has parents 0, 1, 2.
        let g = NetworkGraph::from_edges(4, [(0, 3), (1, 3), (2, 3)]).unwrap();
        for bits in 0..8u8 {
            let y = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, 1];
            let and = y[0] & y[1] & y[2];
            assert_eq!(compute_input(&g, &y, 3).unwrap(), and);
        }
    }

    #[test]
    fn schmitt_branches() {
        let cfg = SchmittConfig::default();
        assert_eq!(schmitt_output(cfg.v_thh, DORMANT, &cfg), FIRING);
        assert_eq!(
            schmitt_output(0.5 * (cfg.v_thl + cfg.v_thh), FIRING, &cfg),
            FIRING
        );
        assert_eq!(
            schmitt_output(0.5 * (cfg.v_thl + cfg.v_thh), DORMANT, &cfg),
            DORMANT
        );
        assert_eq!(schmitt_output(0.0, FIRING, &cfg), DORMANT);
        assert_eq!(schmitt_output(-0.3, DORMANT, &cfg), DORMANT);
    }

    #[test]
    fn schmitt_is_monotone() {
        let cfg = SchmittConfig::default();
        for y_prev in [FIRING, DORMANT] {
            let mut last = DORMANT;
            let mut switched_on = false;
            for step in 0..=2000 {
                let s = -1.0 + step as f64 * 1e-3;
                let out = schmitt_output(s, y_prev, &cfg);
                if switched_on {
                    assert_eq!(out, FIRING, "switched back off at s = {s}");
                }
                if out == FIRING && last == DORMANT {
                    switched_on = true;
                }
                last = out;
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_edges() {
        assert!(SchmittConfig::new(0.5, 0.4, 1.0).is_err());
        assert!(SchmittConfig::new(0.0, 0.4, 1.0).is_err());
        assert!(SchmittConfig::new(0.2, 0.4, 0.0).is_err());
        assert_eq!(
            NetworkGraph::from_edges(2, [(1, 1)]).unwrap_err(),
            NetworkError::SelfLoop(1)
        );
        assert!(NetworkGraph::from_edges(2, [(0, 2)]).is_err());
        assert!(NetworkGraph::from_edges(0, []).is_err());
    }

    #[test]
    fn odd_cycle_detection() {
        assert!(ring(3).has_odd_cycle());
        assert!(ring(5).has_odd_cycle());
        assert!(!ring(4).has_odd_cycle());
        assert!(!ring(6).has_odd_cycle());
        // A chord 0 -> 2 closes the odd cycle 0 -> 2 -> 3 -> 0.
        let g = NetworkGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        assert!(g.has_odd_cycle());
        // A chord 0 -> 3 only adds the 2-cycle 0 -> 3 -> 0.
        let g = NetworkGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 3)]).unwrap();
        assert!(!g.has_odd_cycle());
        // A DAG joining two odd cycles' worth of nodes has none.
        let dag = NetworkGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(!dag.has_odd_cycle());
    }

    #[test]
    fn validation_flags_each_rule() {
        let cfg = SchmittConfig::default();
        let g = ring(4);
        let ok = NetworkState {
            v: vec![0.2, 0.5, 0.9, 0.9],
            y: vec![FIRING, DORMANT, DORMANT, DORMANT],
            t: 0.0,
        };
        assert!(validate_state(&g, &ok, &cfg).is_empty());

        let adjacent = NetworkState {
            v: vec![0.2, 0.2, 0.9, 0.9],
            y: vec![FIRING, FIRING, DORMANT, DORMANT],
            t: 0.0,
        };
        let violations = validate_state(&g, &adjacent, &cfg);
        let adjacent_count = violations
            .iter()
            .filter(|v| {
                matches!(
                    v,
                    Violation::AdjacentFiring {
                        parent: 0,
                        child: 1
                    }
                )
            })
            .count();
        assert_eq!(adjacent_count, 1);

        let mut high = ok.clone();
        high.v[2] = 1.5;
        let violations = validate_state(&g, &high, &cfg);
        assert!(violations.contains(&Violation::VoltageRange { neuron: 2, v: 1.5 }));

        let short = NetworkState {
            v: vec![0.0],
            y: vec![1],
            t: 0.0,
        };
        assert!(matches!(
            validate_state(&g, &short, &cfg)[..],
            [Violation::SizeMismatch { .. }]
        ));
    }

    #[test]
    fn zero_fraction_is_quiescent() {
        let cfg = SchmittConfig::default();
        let g = ring(8);
        let init = random_initial_state(&g, &cfg, 0.0, 7).unwrap();
        assert_eq!(init.achieved_fraction, 0.0);
        assert!(init.state.y.iter().all(|&y| y == DORMANT));
        assert!(init
            .state
            .v
            .iter()
            .all(|&v| v >= 1.0 - cfg.v_thl && v < 1.0));
        assert!(validate_state(&g, &init.state, &cfg).is_empty());
    }

    #[test]
    fn four_ring_never_exceeds_independence_number() {
        // Independence number of the 4-cycle, by enumeration over all subsets.
        let g = ring(4);
        let alpha = (0u32..16)
            .filter(|mask| (0..4).all(|i| !(mask >> i & 1 == 1 && mask >> ((i + 1) % 4) & 1 == 1)))
            .map(u32::count_ones)
            .max()
            .unwrap();
        assert_eq!(alpha, 2);
        let cfg = SchmittConfig::default();
        for seed in 0..50 {
            let init = random_initial_state(&g, &cfg, 0.3, seed).unwrap();
            assert!(init.state.firing_count() <= alpha as usize);
            assert!(validate_state(&g, &init.state, &cfg).is_empty());
        }
    }

    #[test]
    fn random_state_is_reproducible() {
        let cfg = SchmittConfig::default();
        let g = ring(30);
        let a = random_initial_state(&g, &cfg, 0.3, 11).unwrap();
        let b = random_initial_state(&g, &cfg, 0.3, 11).unwrap();
        let c = random_initial_state(&g, &cfg, 0.3, 12).unwrap();
        assert_eq!(a, b);
        assert!(a
            .state
            .v
            .iter()
            .zip(&b.state.v)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.state, c.state);
        assert!(random_initial_state(&g, &cfg, 1.5, 0).is_err());
    }

    #[test]
    fn pulse_string_is_complement() {
        let s = NetworkState::from_pulse_string(&[1, 0, 0, 1, 0, 0], vec![0.5; 6], 0.0);
        assert_eq!(s.y, vec![0, 1, 1, 0, 1, 1]);
        assert_eq!(s.pulse_string(), vec![1, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn transition_kind_names_round_trip() {
        for kind in [
            TransitionKind::AutonomousStop,
            TransitionKind::InputDrivenStart,
            TransitionKind::InputDrivenStop,
        ] {
            assert_eq!(TransitionKind::parse(kind.as_str()), Some(kind));
        }
        assert_eq!(TransitionKind::parse("nope"), None);
    }
}
