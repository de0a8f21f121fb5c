//! Exact event-driven integration of differentiating-neuron networks.
//!
//! Between output changes every input is constant, so each capacitor follows
//! `v(t) = u + (v0 - u) * exp(-(t - t0) / tau)`. Only firing neurons can change
//! output on their own (their derivative decays to `v_thl`); every other change
//! is an instantaneous cascade triggered by such an autonomous stop.
//!
//! Two routes are provided. The free functions ([`next_autonomous_event`],
//! [`advance_voltages`], [`apply_event`], [`step`], [`run_until`]) operate on a
//! dense [`NetworkState`] and touch every neuron per event. [`Engine`] keeps a
//! per-neuron anchor `(t0, v0)` that is only refreshed when the neuron's input
//! changes, plus a heap of scheduled stops, so an event costs time proportional
//! to the size of its cascade.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{
    input_of, schmitt_output, NetworkError, NetworkGraph, NetworkState, SchmittConfig,
    TransitionKind, DORMANT, FIRING,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("neuron {neuron} changed output more than {limit} times in one cascade at t = {time} (odd-cycle oscillation)")]
    OddCycleOscillation {
        neuron: usize,
        time: f64,
        limit: u32,
    },
    #[error("firing neuron {neuron} has non-positive derivative {scaled_derivative}")]
    FiringPrecondition {
        neuron: usize,
        scaled_derivative: f64,
    },
    #[error("graph contains an odd-length directed cycle")]
    OddCycleGraph,
    #[error("invalid engine limits: {0}")]
    Limits(&'static str),
    #[error("state has {state} neurons but the graph has {graph}")]
    SizeMismatch { state: usize, graph: usize },
    #[error("target time {target} precedes current time {now}")]
    TimeReversal { target: f64, now: f64 },
    #[error(transparent)]
    Config(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineLimits {
    /// A neuron changing output more often than this within one cascade
    /// aborts the cascade with [`EngineError::OddCycleOscillation`].
    pub max_cascade_changes_per_neuron: u32,
    /// Scheduled stops within this window of the earliest one are merged
    /// into a single event.
    pub tie_tolerance: f64,
    /// Permit graphs with odd directed cycles in [`Engine::new`].
    pub allow_odd_cycles: bool,
}

impl Default for EngineLimits {
    fn default() -> Self {
        Self {
            max_cascade_changes_per_neuron: 2,
            tie_tolerance: 0.0,
            allow_odd_cycles: false,
        }
    }
}

impl EngineLimits {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_cascade_changes_per_neuron < 1 {
            return Err(EngineError::Limits(
                "max_cascade_changes_per_neuron must be at least 1",
            ));
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance.is_finite()) {
            return Err(EngineError::Limits(
                "tie_tolerance must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// One autonomous event and the cascade it triggered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    /// Neurons whose derivative reached `v_thl`, ascending.
    pub autonomous: Vec<usize>,
    /// Input-driven changes in the order they were resolved.
    pub cascade: Vec<(usize, TransitionKind)>,
}

impl EventRecord {
    /// Every output change of this event, autonomous stops first.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, TransitionKind)> + '_ {
        self.autonomous
            .iter()
            .map(|&i| (i, TransitionKind::AutonomousStop))
            .chain(self.cascade.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Event(EventRecord),
    /// No neuron fires; the network sits at a fixed point.
    Quiescent,
}

/// Order in which the cascade work-set is drained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkOrder {
    /// First in, first out; children are enqueued in ascending index order.
    Fifo,
    /// Uniformly random pops from a seeded generator.
    Shuffled(u64),
}

pub(crate) trait CascadeTarget {
    fn output(&self, neuron: usize) -> u8;
    fn input(&self, neuron: usize) -> u8;
    fn voltage(&self, neuron: usize) -> f64;
    fn set_output(&mut self, neuron: usize, y: u8);
}

enum WorkSet {
    Fifo(VecDeque<usize>),
    Shuffled(Vec<usize>, Box<ChaCha8Rng>),
}

impl WorkSet {
    fn new(order: WorkOrder) -> Self {
        match order {
            WorkOrder::Fifo => Self::Fifo(VecDeque::new()),
            WorkOrder::Shuffled(seed) => {
                Self::Shuffled(Vec::new(), Box::new(ChaCha8Rng::seed_from_u64(seed)))
            }
        }
    }

    fn push(&mut self, neuron: usize) {
        match self {
            Self::Fifo(queue) => queue.push_back(neuron),
            Self::Shuffled(list, _) => list.push(neuron),
        }
    }

    fn pop(&mut self) -> Option<usize> {
        match self {
            Self::Fifo(queue) => queue.pop_front(),
            Self::Shuffled(list, rng) => {
                if list.is_empty() {
                    None
                } else {
                    let at = rng.random_range(0..list.len());
                    Some(list.swap_remove(at))
                }
            }
        }
    }
}

/// Applies the autonomous stops, then drains the work-set, re-evaluating the
/// Schmitt trigger of every neuron whose input may have changed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn resolve_cascade<T: CascadeTarget>(
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
    target: &mut T,
    autonomous: &[usize],
    initial_work: &[usize],
    order: WorkOrder,
    time: f64,
) -> Result<Vec<(usize, TransitionKind)>, EngineError> {
    let mut changes: HashMap<usize, u32> = HashMap::new();
    let mut queued: HashSet<usize> = HashSet::new();
    let mut work = WorkSet::new(order);
    let enqueue = |neuron: usize, work: &mut WorkSet, queued: &mut HashSet<usize>| {
        if queued.insert(neuron) {
            work.push(neuron);
        }
    };

    let mut seeds: Vec<usize> = initial_work.to_vec();
    for &neuron in autonomous {
        target.set_output(neuron, DORMANT);
        changes.insert(neuron, 1);
        seeds.extend_from_slice(graph.children(neuron));
    }
    seeds.sort_unstable();
    seeds.dedup();
    for neuron in seeds {
        enqueue(neuron, &mut work, &mut queued);
    }

    let mut log = Vec::new();
    while let Some(neuron) = work.pop() {
        queued.remove(&neuron);
        let y = target.output(neuron);
        let s = f64::from(target.input(neuron)) - target.voltage(neuron);
        let next = schmitt_output(s, y, cfg);
        if next == y {
            continue;
        }
        let count = changes.entry(neuron).or_insert(0);
        *count += 1;
        if *count > limits.max_cascade_changes_per_neuron {
            return Err(EngineError::OddCycleOscillation {
                neuron,
                time,
                limit: limits.max_cascade_changes_per_neuron,
            });
        }
        target.set_output(neuron, next);
        log.push((
            neuron,
            if next == FIRING {
                TransitionKind::InputDrivenStart
            } else {
                TransitionKind::InputDrivenStop
            },
        ));
        for &child in graph.children(neuron) {
            enqueue(child, &mut work, &mut queued);
        }
    }
    Ok(log)
}

struct DenseTarget<'a> {
    graph: &'a NetworkGraph,
    state: &'a mut NetworkState,
}

impl CascadeTarget for DenseTarget<'_> {
    fn output(&self, neuron: usize) -> u8 {
        self.state.y[neuron]
    }

    fn input(&self, neuron: usize) -> u8 {
        input_of(self.graph, &self.state.y, neuron)
    }

    fn voltage(&self, neuron: usize) -> f64 {
        self.state.v[neuron]
    }

    fn set_output(&mut self, neuron: usize, y: u8) {
        self.state.y[neuron] = y;
    }
}

#[inline]
fn time_to_threshold(scaled_derivative: f64, cfg: &SchmittConfig) -> f64 {
    (cfg.tau * (scaled_derivative / cfg.v_thl).ln()).max(0.0)
}

/// Earliest autonomous stop and the neurons reaching it, or `None` when no
/// neuron fires.
pub fn next_autonomous_event(
    state: &NetworkState,
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
) -> Result<Option<(f64, Vec<usize>)>, EngineError> {
    let mut candidates = Vec::new();
    for neuron in 0..graph.len() {
        if state.y[neuron] != FIRING {
            continue;
        }
        let s = f64::from(input_of(graph, &state.y, neuron)) - state.v[neuron];
        if s <= 0.0 {
            return Err(EngineError::FiringPrecondition {
                neuron,
                scaled_derivative: s,
            });
        }
        candidates.push((state.t + time_to_threshold(s, cfg), neuron));
    }
    let Some(earliest) = candidates.iter().map(|c| c.0).min_by(f64::total_cmp) else {
        return Ok(None);
    };
    let members = candidates
        .iter()
        .filter(|c| c.0 <= earliest + limits.tie_tolerance)
        .map(|c| c.1)
        .collect();
    Ok(Some((earliest, members)))
}

/// Evolves every capacitor for `dt` under the current (constant) inputs.
pub fn advance_voltages(
    state: &mut NetworkState,
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    dt: f64,
) {
    if dt == 0.0 {
        return;
    }
    let decay = (-dt / cfg.tau).exp();
    let inputs: Vec<u8> = (0..graph.len())
        .map(|i| input_of(graph, &state.y, i))
        .collect();
    for (v, u) in state.v.iter_mut().zip(inputs) {
        let u = f64::from(u);
        *v = u + (*v - u) * decay;
    }
    state.t += dt;
}

/// Stops the neurons in `autonomous` and resolves the resulting cascade in
/// place. The state must already be advanced to the event time.
pub fn apply_event(
    state: &mut NetworkState,
    autonomous: &[usize],
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
) -> Result<Vec<(usize, TransitionKind)>, EngineError> {
    apply_event_ordered(state, autonomous, graph, cfg, limits, WorkOrder::Fifo)
}

/// [`apply_event`] with an explicit work-set order.
pub fn apply_event_ordered(
    state: &mut NetworkState,
    autonomous: &[usize],
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
    order: WorkOrder,
) -> Result<Vec<(usize, TransitionKind)>, EngineError> {
    let time = state.t;
    let mut target = DenseTarget { graph, state };
    resolve_cascade(
        graph,
        cfg,
        limits,
        &mut target,
        autonomous,
        &[],
        order,
        time,
    )
}

/// Resolves every inconsistent output of `state` at its current time, as if
/// all neurons had just been perturbed. A valid state is left untouched.
pub fn settle_state(
    state: &mut NetworkState,
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
) -> Result<Vec<(usize, TransitionKind)>, EngineError> {
    let all: Vec<usize> = (0..graph.len()).collect();
    let time = state.t;
    let mut target = DenseTarget { graph, state };
    resolve_cascade(
        graph,
        cfg,
        limits,
        &mut target,
        &[],
        &all,
        WorkOrder::Fifo,
        time,
    )
}

/// Advances a dense state to its next autonomous event and resolves it.
pub fn step(
    state: &mut NetworkState,
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
) -> Result<StepOutcome, EngineError> {
    let Some((time, autonomous)) = next_autonomous_event(state, graph, cfg, limits)? else {
        return Ok(StepOutcome::Quiescent);
    };
    advance_voltages(state, graph, cfg, time - state.t);
    state.t = time;
    let cascade = apply_event(state, &autonomous, graph, cfg, limits)?;
    Ok(StepOutcome::Event(EventRecord {
        time,
        autonomous,
        cascade,
    }))
}

/// Steps a dense state through every event up to `t_target`, then advances
/// the voltages to exactly `t_target`.
pub fn run_until(
    state: &mut NetworkState,
    graph: &NetworkGraph,
    cfg: &SchmittConfig,
    limits: &EngineLimits,
    t_target: f64,
) -> Result<Vec<EventRecord>, EngineError> {
    if t_target < state.t {
        return Err(EngineError::TimeReversal {
            target: t_target,
            now: state.t,
        });
    }
    let mut log = Vec::new();
    loop {
        match next_autonomous_event(state, graph, cfg, limits)? {
            Some((time, _)) if time <= t_target => {
                if let StepOutcome::Event(record) = step(state, graph, cfg, limits)? {
                    log.push(record);
                }
            }
            _ => break,
        }
    }
    advance_voltages(state, graph, cfg, t_target - state.t);
    state.t = t_target;
    Ok(log)
}

#[derive(Clone, Copy, Debug)]
struct Scheduled {
    time: f64,
    neuron: usize,
    epoch: u32,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.neuron.cmp(&other.neuron))
            .then(self.epoch.cmp(&other.epoch))
    }
}

/// Serializable engine state. Restoring it with [`Engine::from_snapshot`]
/// continues the run bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub t: f64,
    pub y: Vec<u8>,
    pub anchor_t: Vec<f64>,
    pub anchor_v: Vec<f64>,
    /// Scheduled autonomous stop of every firing neuron.
    pub stop_time: Vec<Option<f64>>,
    pub events_processed: u64,
}

/// Event-driven simulator that owns a network state.
#[derive(Clone, Debug)]
pub struct Engine<'g> {
    graph: &'g NetworkGraph,
    cfg: SchmittConfig,
    limits: EngineLimits,
    t: f64,
    y: Vec<u8>,
    u: Vec<u8>,
    firing_parents: Vec<u32>,
    anchor_t: Vec<f64>,
    anchor_v: Vec<f64>,
    stop_time: Vec<f64>,
    epoch: Vec<u32>,
    heap: BinaryHeap<Reverse<Scheduled>>,
    events_processed: u64,
}

struct LazyTarget<'a> {
    graph: &'a NetworkGraph,
    tau: f64,
    t: f64,
    y: &'a mut [u8],
    u: &'a mut [u8],
    firing_parents: &'a mut [u32],
    anchor_t: &'a mut [f64],
    anchor_v: &'a mut [f64],
}

#[inline]
fn relax(u: u8, v0: f64, dt: f64, tau: f64) -> f64 {
    if dt == 0.0 {
        v0
    } else {
        let u = f64::from(u);
        u + (v0 - u) * (-dt / tau).exp()
    }
}

impl CascadeTarget for LazyTarget<'_> {
    fn output(&self, neuron: usize) -> u8 {
        self.y[neuron]
    }

    fn input(&self, neuron: usize) -> u8 {
        self.u[neuron]
    }

    fn voltage(&self, neuron: usize) -> f64 {
        relax(
            self.u[neuron],
            self.anchor_v[neuron],
            self.t - self.anchor_t[neuron],
            self.tau,
        )
    }

    fn set_output(&mut self, neuron: usize, y: u8) {
        if self.y[neuron] == y {
            return;
        }
        self.y[neuron] = y;
        for &child in self.graph.children(neuron) {
            if y == FIRING {
                self.firing_parents[child] += 1;
            } else {
                self.firing_parents[child] -= 1;
            }
            let input = u8::from(self.firing_parents[child] == 0);
            if input != self.u[child] {
                // Re-anchor under the old input before it changes.
                self.anchor_v[child] = self.voltage(child);
                self.anchor_t[child] = self.t;
                self.u[child] = input;
            }
        }
    }
}

impl<'g> Engine<'g> {
    pub fn new(
        graph: &'g NetworkGraph,
        state: &NetworkState,
        cfg: SchmittConfig,
        limits: EngineLimits,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        limits.validate()?;
        if state.v.len() != graph.len() || state.y.len() != graph.len() {
            return Err(EngineError::SizeMismatch {
                state: state.v.len().min(state.y.len()),
                graph: graph.len(),
            });
        }
        if !limits.allow_odd_cycles && graph.has_odd_cycle() {
            return Err(EngineError::OddCycleGraph);
        }
        let n = graph.len();
        let mut engine = Self {
            graph,
            cfg,
            limits,
            t: state.t,
            y: state.y.clone(),
            u: vec![DORMANT; n],
            firing_parents: vec![0; n],
            anchor_t: vec![state.t; n],
            anchor_v: state.v.clone(),
            stop_time: vec![f64::INFINITY; n],
            epoch: vec![0; n],
            heap: BinaryHeap::new(),
            events_processed: 0,
        };
        engine.derive_inputs();
        for neuron in 0..n {
            if engine.y[neuron] == FIRING {
                let s = f64::from(engine.u[neuron]) - engine.anchor_v[neuron];
                if s <= 0.0 {
                    return Err(EngineError::FiringPrecondition {
                        neuron,
                        scaled_derivative: s,
                    });
                }
                let stop = engine.t + time_to_threshold(s, &engine.cfg);
                engine.schedule(neuron, stop);
            }
        }
        Ok(engine)
    }

    /// Restores an engine from a snapshot taken on the same graph.
    pub fn from_snapshot(
        graph: &'g NetworkGraph,
        snapshot: &EngineSnapshot,
        cfg: SchmittConfig,
        limits: EngineLimits,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        limits.validate()?;
        let n = graph.len();
        let sizes = [
            snapshot.y.len(),
            snapshot.anchor_t.len(),
            snapshot.anchor_v.len(),
            snapshot.stop_time.len(),
        ];
        if sizes.iter().any(|&len| len != n) {
            return Err(EngineError::SizeMismatch {
                state: *sizes.iter().min().unwrap_or(&0),
                graph: n,
            });
        }
        if !limits.allow_odd_cycles && graph.has_odd_cycle() {
            return Err(EngineError::OddCycleGraph);
        }
        let mut engine = Self {
            graph,
            cfg,
            limits,
            t: snapshot.t,
            y: snapshot.y.clone(),
            u: vec![DORMANT; n],
            firing_parents: vec![0; n],
            anchor_t: snapshot.anchor_t.clone(),
            anchor_v: snapshot.anchor_v.clone(),
            stop_time: vec![f64::INFINITY; n],
            epoch: vec![0; n],
            heap: BinaryHeap::new(),
            events_processed: snapshot.events_processed,
        };
        engine.derive_inputs();
        for neuron in 0..n {
            if engine.y[neuron] == FIRING {
                let stop = snapshot.stop_time[neuron].ok_or(EngineError::FiringPrecondition {
                    neuron,
                    scaled_derivative: f64::NAN,
                })?;
                engine.schedule(neuron, stop);
            }
        }
        Ok(engine)
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            t: self.t,
            y: self.y.clone(),
            anchor_t: self.anchor_t.clone(),
            anchor_v: self.anchor_v.clone(),
            stop_time: (0..self.y.len())
                .map(|i| (self.y[i] == FIRING).then_some(self.stop_time[i]))
                .collect(),
            events_processed: self.events_processed,
        }
    }

    fn derive_inputs(&mut self) {
        for neuron in 0..self.graph.len() {
            let parents = self.graph.parents(neuron);
            self.firing_parents[neuron] =
                parents.iter().filter(|&&p| self.y[p] == FIRING).count() as u32;
            self.u[neuron] = if parents.is_empty() {
                self.graph.external_input(neuron)
            } else {
                u8::from(self.firing_parents[neuron] == 0)
            };
        }
    }

    fn schedule(&mut self, neuron: usize, time: f64) {
        self.epoch[neuron] = self.epoch[neuron].wrapping_add(1);
        self.stop_time[neuron] = time;
        self.heap.push(Reverse(Scheduled {
            time,
            neuron,
            epoch: self.epoch[neuron],
        }));
    }

    fn is_live(&self, entry: &Scheduled) -> bool {
        self.y[entry.neuron] == FIRING && self.epoch[entry.neuron] == entry.epoch
    }

    fn peek_live(&mut self) -> Option<Scheduled> {
        while let Some(Reverse(entry)) = self.heap.peek().copied() {
            if self.is_live(&entry) {
                return Some(entry);
            }
            self.heap.pop();
        }
        None
    }

    pub fn graph(&self) -> &'g NetworkGraph {
        self.graph
    }

    pub fn config(&self) -> &SchmittConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn outputs(&self) -> &[u8] {
        &self.y
    }

    pub fn output(&self, neuron: usize) -> u8 {
        self.y[neuron]
    }

    pub fn firing_count(&self) -> usize {
        self.y.iter().filter(|&&y| y == FIRING).count()
    }

    /// Capacitor voltage of one neuron at the current time.
    pub fn voltage(&self, neuron: usize) -> f64 {
        relax(
            self.u[neuron],
            self.anchor_v[neuron],
            self.t - self.anchor_t[neuron],
            self.cfg.tau,
        )
    }

    /// Materializes the full state at the current time.
    pub fn state(&self) -> NetworkState {
        NetworkState {
            v: (0..self.y.len()).map(|i| self.voltage(i)).collect(),
            y: self.y.clone(),
            t: self.t,
        }
    }

    /// Time of the next autonomous event, if any neuron fires.
    pub fn next_event_time(&mut self) -> Option<f64> {
        self.peek_live().map(|entry| entry.time)
    }

    pub fn step(&mut self) -> Result<StepOutcome, EngineError> {
        let Some(first) = self.peek_live() else {
            return Ok(StepOutcome::Quiescent);
        };
        self.heap.pop();
        let time = first.time.max(self.t);
        let mut autonomous = vec![first.neuron];
        while let Some(next) = self.peek_live() {
            if next.time <= first.time + self.limits.tie_tolerance {
                self.heap.pop();
                autonomous.push(next.neuron);
            } else {
                break;
            }
        }
        autonomous.sort_unstable();
        autonomous.dedup();
        self.t = time;

        let mut target = LazyTarget {
            graph: self.graph,
            tau: self.cfg.tau,
            t: time,
            y: &mut self.y,
            u: &mut self.u,
            firing_parents: &mut self.firing_parents,
            anchor_t: &mut self.anchor_t,
            anchor_v: &mut self.anchor_v,
        };
        let cascade = resolve_cascade(
            self.graph,
            &self.cfg,
            &self.limits,
            &mut target,
            &autonomous,
            &[],
            WorkOrder::Fifo,
            time,
        )?;
        for &(neuron, kind) in &cascade {
            if kind == TransitionKind::InputDrivenStart && self.y[neuron] == FIRING {
                let s = f64::from(self.u[neuron]) - self.voltage(neuron);
                let stop = time + time_to_threshold(s, &self.cfg);
                self.schedule(neuron, stop);
            }
        }
        self.events_processed += 1;
        Ok(StepOutcome::Event(EventRecord {
            time,
            autonomous,
            cascade,
        }))
    }

    /// Processes every event up to `t_target`, passing each record to
    /// `observe`, and leaves the clock at exactly `t_target`. Returns the
    /// number of events processed.
    pub fn advance_with<F>(&mut self, t_target: f64, mut observe: F) -> Result<u64, EngineError>
    where
        F: FnMut(&Self, &EventRecord),
    {
        if t_target < self.t {
            return Err(EngineError::TimeReversal {
                target: t_target,
                now: self.t,
            });
        }
        let mut count = 0;
        while let Some(next) = self.next_event_time() {
            if next > t_target {
                break;
            }
            if let StepOutcome::Event(record) = self.step()? {
                observe(self, &record);
                count += 1;
            }
        }
        self.t = t_target;
        Ok(count)
    }

    /// Like [`Engine::advance_with`] but collects the event log.
    pub fn run_until(&mut self, t_target: f64) -> Result<Vec<EventRecord>, EngineError> {
        let mut log = Vec::new();
        self.advance_with(t_target, |_, record| log.push(record.clone()))?;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validate_state;

    fn ring(n: usize) -> NetworkGraph {
        NetworkGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    fn single_neuron() -> NetworkGraph {
        NetworkGraph::from_edges(1, []).unwrap()
    }

    #[test]
    fn next_event_at_threshold_is_immediate() {
        let cfg = SchmittConfig::new(0.5, 0.9, 1.0).unwrap();
        let g = single_neuron();
        let state = NetworkState {
            v: vec![0.5],
            y: vec![FIRING],
            t: 3.0,
        };
        let (t, set) = next_autonomous_event(&state, &g, &cfg, &EngineLimits::default())
            .unwrap()
            .unwrap();
        assert_eq!(t, 3.0);
        assert_eq!(set, vec![0]);
    }

    #[test]
    fn next_event_closed_form() {
        // tau*dv/dt = 0.8 decays to 0.5 after ln(1.6).
        let cfg = SchmittConfig::new(0.5, 0.9, 1.0).unwrap();
        let g = single_neuron();
        let state = NetworkState {
            v: vec![0.2],
            y: vec![FIRING],
            t: 0.0,
        };
        let (t, _) = next_autonomous_event(&state, &g, &cfg, &EngineLimits::default())
            .unwrap()
            .unwrap();
        assert!((t - 0.470_003_629_245_735_5).abs() < 1e-15);

        // Explicit Euler with a small step lands on the same crossing.
        let dt = 1e-6;
        let (mut v, mut time) = (0.2_f64, 0.0_f64);
        while 1.0 - v > 0.5 {
            v += dt * (1.0 - v);
            time += dt;
        }
        assert!((time - t).abs() < 1e-5);
    }

    #[test]
    fn quiescent_has_no_event() {
        let cfg = SchmittConfig::default();
        let g = ring(4);
        let state = NetworkState {
            v: vec![0.9; 4],
            y: vec![DORMANT; 4],
            t: 0.0,
        };
        assert_eq!(
            next_autonomous_event(&state, &g, &cfg, &EngineLimits::default()).unwrap(),
            None
        );
        let mut s = state.clone();
        assert_eq!(
            step(&mut s, &g, &cfg, &EngineLimits::default()).unwrap(),
            StepOutcome::Quiescent
        );
        let mut engine = Engine::new(&g, &state, cfg, EngineLimits::default()).unwrap();
        assert_eq!(engine.step().unwrap(), StepOutcome::Quiescent);
    }

    #[test]
    fn firing_precondition_is_checked() {
        let cfg = SchmittConfig::default();
        let g = single_neuron();
        let state = NetworkState {
            v: vec![1.0],
            y: vec![FIRING],
            t: 0.0,
        };
        assert!(matches!(
            next_autonomous_event(&state, &g, &cfg, &EngineLimits::default()),
            Err(EngineError::FiringPrecondition { neuron: 0, .. })
        ));
        assert!(Engine::new(&g, &state, cfg, EngineLimits::default()).is_err());
    }

    #[test]
    fn advance_matches_closed_forms() {
        let cfg = SchmittConfig::default();
        let mut g = NetworkGraph::from_edges(2, []).unwrap();
        g.set_external_input(1, 0).unwrap();
        let mut state = NetworkState {
            v: vec![0.0, 0.8],
            y: vec![DORMANT, DORMANT],
            t: 0.0,
        };
        let before = state.clone();
        advance_voltages(&mut state, &g, &cfg, 0.0);
        assert_eq!(state, before);

        let mut one = state.clone();
        advance_voltages(&mut one, &g, &cfg, 1.0);
        assert!((one.v[0] - (1.0 - (-1.0_f64).exp())).abs() < 1e-15);
        assert!((one.v[0] - 0.632_120_558_828_557_7).abs() < 1e-12);

        let mut two = state;
        advance_voltages(&mut two, &g, &cfg, 2.0);
        assert!((two.v[1] - 0.108_268_226_589_290_16).abs() < 1e-12);
        assert_eq!(two.t, 2.0);
    }

    #[test]
    fn isolated_stop_has_empty_cascade() {
        let cfg = SchmittConfig::default();
        let g = single_neuron();
        let mut state = NetworkState {
            v: vec![0.5],
            y: vec![FIRING],
            t: 0.0,
        };
        match step(&mut state, &g, &cfg, &EngineLimits::default()).unwrap() {
            StepOutcome::Event(record) => {
                assert_eq!(record.autonomous, vec![0]);
                assert!(record.cascade.is_empty());
            }
            StepOutcome::Quiescent => panic!("expected an event"),
        }
        assert_eq!(state.y, vec![DORMANT]);
    }

    #[test]
    fn odd_cycle_cascade_trips_guard() {
        // Three-ring 0 -> 1 -> 2 -> 0 with an extra driver 3 -> 0. Every ring
        // neuron is discharged enough to fire as soon as its input rises, so
        // releasing neuron 0 chases a pulse around the odd cycle forever.
        let cfg = SchmittConfig::default();
        let g = NetworkGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (3, 0)]).unwrap();
        let state = NetworkState {
            v: vec![0.05, 0.05, 0.05, 1.0 - cfg.v_thl - 1e-3],
            y: vec![DORMANT, FIRING, DORMANT, FIRING],
            t: 0.0,
        };
        assert!(validate_state(&g, &state, &cfg).is_empty());
        assert!(matches!(
            Engine::new(&g, &state, cfg, EngineLimits::default()),
            Err(EngineError::OddCycleGraph)
        ));
        let limits = EngineLimits {
            allow_odd_cycles: true,
            ..EngineLimits::default()
        };
        let mut engine = Engine::new(&g, &state, cfg, limits).unwrap();
        assert!(matches!(
            engine.step(),
            Err(EngineError::OddCycleOscillation { .. })
        ));

        let mut dense = state;
        assert!(matches!(
            step(&mut dense, &g, &cfg, &limits),
            Err(EngineError::OddCycleOscillation { .. })
        ));
    }

    #[test]
    fn ties_merge_into_one_event() {
        let cfg = SchmittConfig::default();
        let g = NetworkGraph::from_edges(2, []).unwrap();
        let state = NetworkState {
            v: vec![0.3, 0.3],
            y: vec![FIRING, FIRING],
            t: 0.0,
        };
        let mut engine = Engine::new(&g, &state, cfg, EngineLimits::default()).unwrap();
        match engine.step().unwrap() {
            StepOutcome::Event(record) => assert_eq!(record.autonomous, vec![0, 1]),
            StepOutcome::Quiescent => panic!("expected an event"),
        }

        let near = NetworkState {
            v: vec![0.3, 0.3 + 1e-9],
            y: vec![FIRING, FIRING],
            t: 0.0,
        };
        let mut exact = Engine::new(&g, &near, cfg, EngineLimits::default()).unwrap();
        let StepOutcome::Event(first) = exact.step().unwrap() else {
            panic!()
        };
        assert_eq!(first.autonomous, vec![1]);
        let loose = EngineLimits {
            tie_tolerance: 1e-6,
            ..EngineLimits::default()
        };
        let mut merged = Engine::new(&g, &near, cfg, loose).unwrap();
        let StepOutcome::Event(first) = merged.step().unwrap() else {
            panic!()
        };
        assert_eq!(first.autonomous, vec![0, 1]);
    }

    #[test]
    fn run_until_identity_and_reversal() {
        let cfg = SchmittConfig::default();
        let g = ring(4);
        let state = NetworkState {
            v: vec![0.2, 0.5, 0.9, 0.9],
            y: vec![FIRING, DORMANT, DORMANT, DORMANT],
            t: 1.5,
        };
        let mut dense = state.clone();
        assert!(
            run_until(&mut dense, &g, &cfg, &EngineLimits::default(), 1.5)
                .unwrap()
                .is_empty()
        );
        assert_eq!(dense, state);
        assert!(run_until(&mut dense, &g, &cfg, &EngineLimits::default(), 1.0).is_err());

        let mut engine = Engine::new(&g, &state, cfg, EngineLimits::default()).unwrap();
        assert!(engine.run_until(1.5).unwrap().is_empty());
        assert_eq!(engine.state(), state);
    }

    #[test]
    fn single_neuron_matches_closed_form() {
        // Constant input: no accumulation error beyond exp rounding.
        let cfg = SchmittConfig::default();
        let g = single_neuron();
        let state = NetworkState {
            v: vec![0.1],
            y: vec![DORMANT],
            t: 0.0,
        };
        let mut engine = Engine::new(&g, &state, cfg, EngineLimits::default()).unwrap();
        let mut dense = state.clone();
        for k in 1..=50 {
            let t = k as f64 * 0.37;
            engine.run_until(t).unwrap();
            run_until(&mut dense, &g, &cfg, &EngineLimits::default(), t).unwrap();
            let exact = 1.0 - 0.9 * (-t).exp();
            assert!(((engine.voltage(0) - exact) / exact).abs() <= 1e-12);
            assert!(((dense.v[0] - exact) / exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn snapshot_restores_bit_exact() {
        let cfg = SchmittConfig::default();
        let g = ring(8);
        let init = crate::network::random_initial_state(&g, &cfg, 0.4, 3).unwrap();
        let mut straight = Engine::new(&g, &init.state, cfg, EngineLimits::default()).unwrap();
        let mut half = Engine::new(&g, &init.state, cfg, EngineLimits::default()).unwrap();
        half.run_until(20.0).unwrap();
        let snap = half.snapshot();
        let text = serde_json::to_string(&snap).unwrap();
        let back: EngineSnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(back, snap);
        let mut resumed = Engine::from_snapshot(&g, &back, cfg, EngineLimits::default()).unwrap();
        let tail = resumed.run_until(60.0).unwrap();
        let full = straight.run_until(60.0).unwrap();
        let full_tail: Vec<_> = full.into_iter().filter(|r| r.time > 20.0).collect();
        assert_eq!(tail, full_tail);
        let (a, b) = (resumed.state(), straight.state());
        assert!(a
            .v
            .iter()
            .zip(&b.v)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(resumed.events_processed(), straight.events_processed());
    }
}
