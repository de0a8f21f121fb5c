//! Integrating vs differentiating response of a single RC neuron.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    /// `tanh(beta v)`, the integrating readout.
    pub y_int: f64,
    /// `tanh(beta tau dv/dt)`, the differentiating readout.
    pub y_diff: f64,
}

/// A +1/-1 square wave as `(switch_time, level)` pairs, starting high.
pub fn square_wave(half_period: f64, t_end: f64) -> Vec<(f64, f64)> {
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut level = 1.0;
    while t < t_end {
        segments.push((t, level));
        level = -level;
        t += half_period;
    }
    segments
}

/// Samples `tau dv/dt = u - v` for a piecewise-constant input given as
/// `(switch_time, level)` pairs sorted by time. Samples lie on the grid
/// `0, dt, 2 dt, ...` up to `t_end`; at a switch instant the new level applies.
pub fn neuron_response_demo(
    input: &[(f64, f64)],
    v0: f64,
    beta: f64,
    tau: f64,
    dt: f64,
    t_end: f64,
) -> Vec<DemoSample> {
    let level_at = |segment: usize| input.get(segment).map_or(0.0, |s| s.1);
    let mut samples = Vec::new();
    let (mut segment, mut seg_start, mut seg_v) = (0usize, input.first().map_or(0.0, |s| s.0), v0);
    let steps = (t_end / dt).round() as usize;
    for j in 0..=steps {
        let t = j as f64 * dt;
        while segment + 1 < input.len() && input[segment + 1].0 <= t {
            let next_start = input[segment + 1].0;
            let u = level_at(segment);
            seg_v = u + (seg_v - u) * (-(next_start - seg_start) / tau).exp();
            seg_start = next_start;
            segment += 1;
        }
        let u = level_at(segment);
        let v = u + (seg_v - u) * (-(t - seg_start).max(0.0) / tau).exp();
        samples.push(DemoSample {
            t,
            u,
            v,
            y_int: (beta * v).tanh(),
            y_diff: (beta * (u - v)).tanh(),
        });
    }
    samples
}
