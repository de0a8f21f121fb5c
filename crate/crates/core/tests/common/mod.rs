//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringosc::network::FIRING;
use ringosc::phase::PhaseField;
use ringosc::{NetworkGraph, NetworkState, SchmittConfig};

/// Fixed-step reference integrator: classical RK4 on `tau dv/dt = u - v`,
/// with threshold crossings located by linear interpolation inside the step
/// and cascades resolved by repeatedly applying the Schmitt rule.
pub struct Dense<'a> {
    graph: &'a NetworkGraph,
    cfg: SchmittConfig,
    v: Vec<f64>,
    y: Vec<u8>,
    t: f64,
    /// Per-neuron `(time, new_output)`.
    pub transitions: Vec<Vec<(f64, u8)>>,
}

impl<'a> Dense<'a> {
    pub fn new(graph: &'a NetworkGraph, state: &NetworkState, cfg: SchmittConfig) -> Self {
        Self {
            graph,
            cfg,
            v: state.v.clone(),
            y: state.y.clone(),
            t: state.t,
            transitions: vec![Vec::new(); graph.len()],
        }
    }

    fn input(&self, i: usize) -> f64 {
        if self.graph.parents(i).iter().any(|&p| self.y[p] == FIRING) {
            0.0
        } else {
            1.0
        }
    }

    fn rk4(&self, v: f64, u: f64, h: f64) -> f64 {
        let tau = self.cfg.tau;
        let f = |v: f64| (u - v) / tau;
        let k1 = f(v);
        let k2 = f(v + h / 2.0 * k1);
        let k3 = f(v + h / 2.0 * k2);
        let k4 = f(v + h * k3);
        v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    fn set(&mut self, i: usize, y: u8) {
        self.y[i] = y;
        self.transitions[i].push((self.t, y));
    }

    fn cascade(&mut self) {
        loop {
            let mut changed = false;
            for i in 0..self.graph.len() {
                let s = self.input(i) - self.v[i];
                let next = if s >= self.cfg.v_thh || (s >= self.cfg.v_thl && self.y[i] == FIRING) {
                    0
                } else {
                    1
                };
                if next != self.y[i] {
                    self.set(i, next);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    pub fn run(&mut self, t_end: f64, dt: f64) {
        let n = self.graph.len();
        while self.t < t_end {
            let h = dt.min(t_end - self.t);
            let inputs: Vec<f64> = (0..n).map(|i| self.input(i)).collect();
            let next: Vec<f64> = (0..n).map(|i| self.rk4(self.v[i], inputs[i], h)).collect();
            let mut crossing: Option<(f64, usize)> = None;
            for i in 0..n {
                if self.y[i] != FIRING {
                    continue;
                }
                let (s0, s1) = (inputs[i] - self.v[i], inputs[i] - next[i]);
                if s1 <= self.cfg.v_thl {
                    let frac = ((s0 - self.cfg.v_thl) / (s0 - s1)).clamp(0.0, 1.0);
                    if crossing.is_none_or(|(f, _)| frac < f) {
                        crossing = Some((frac, i));
                    }
                }
            }
            match crossing {
                None => {
                    self.v = next;
                    self.t += h;
                }
                Some((frac, i)) => {
                    for (v, target) in self.v.iter_mut().zip(&next) {
                        *v += frac * (target - *v);
                    }
                    self.t += frac * h;
                    self.set(i, 1);
                    self.cascade();
                }
            }
        }
    }
}

/// Rotation classes of cyclic binary strings with no two adjacent ones.
pub fn brute_necklaces(n: usize) -> usize {
    let mask = (1u32 << n) - 1;
    let rotate = |s: u32| ((s << 1) | (s >> (n - 1))) & mask;
    let mut classes = BTreeSet::new();
    for s in 0..=mask {
        if s & rotate(s) != 0 {
            continue;
        }
        let mut canonical = s;
        let mut r = s;
        for _ in 0..n {
            r = rotate(r);
            canonical = canonical.min(r);
        }
        classes.insert(canonical);
    }
    classes.len()
}

/// All-pairs correlation reference: every unordered site pair binned by
/// Manhattan distance, as `(d, mean similarity, pair count)`.
pub fn brute_force_correlation(field: &PhaseField, d_max: usize) -> Vec<(usize, f64, usize)> {
    let n = field.rows * field.cols;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); d_max + 1];
    for a in 0..n {
        for b in a + 1..n {
            let (ra, ca) = (a / field.cols, a % field.cols);
            let (rb, cb) = (b / field.cols, b % field.cols);
            let d = ra.abs_diff(rb) + ca.abs_diff(cb);
            if d <= d_max {
                bins[d].push(ringosc::correlation::similarity(
                    &field.sites[a],
                    &field.sites[b],
                ));
            }
        }
    }
    (1..=d_max)
        .map(|d| {
            let mut values = bins[d].clone();
            values.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut sum = 0.0;
            for v in &values {
                sum += v;
            }
            (d, sum / values.len() as f64, values.len())
        })
        .collect()
}

/// Random directed graph whose edges all cross between two classes of
/// neurons, so every directed cycle is even. No two-cycles.
pub fn random_bipartite_graph(n: usize, edges: usize, seed: u64) -> NetworkGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut set = BTreeSet::new();
    for _ in 0..edges {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if side[a] != side[b] && !set.contains(&(b, a)) {
            set.insert((a, b));
        }
    }
    NetworkGraph::from_edges(n, set).unwrap()
}
