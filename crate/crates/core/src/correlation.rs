//! Phase similarity between rings, its decay with lattice distance, and the
//! fitted correlation length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::{circular_distance, PhaseField, RingPhase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("d_max = {d_max} is outside 1..={max} for a {rows}x{cols} grid")]
    DMax {
        d_max: usize,
        rows: usize,
        cols: usize,
        max: usize,
    },
    #[error("only {usable} usable points for the fit, need {needed}")]
    FitFailed { usable: usize, needed: usize },
    #[error("correlation does not decay (slope {slope})")]
    NoDecay { slope: f64 },
    #[error("phase fields of a series have different shapes")]
    ShapeMismatch,
}

/// `cos^2(pi * delta)` for rings on the same converged cycle type, where
/// `delta` is their circular phase difference in cycles; 0 otherwise.
pub fn similarity(a: &RingPhase, b: &RingPhase) -> f64 {
    if a.k != b.k || !a.converged || !b.converged {
        return 0.0;
    }
    let c = (std::f64::consts::PI * circular_distance(a.theta, b.theta)).cos();
    c * c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub d: usize,
    pub c: f64,
    pub pair_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationCurve {
    pub fn from_values(values: &[(usize, f64)]) -> Self {
        Self {
            entries: values
                .iter()
                .map(|&(d, c)| CorrelationEntry {
                    d,
                    c,
                    pair_count: 1,
                })
                .collect(),
        }
    }
}

/// Sum that does not depend on the order the terms were produced in.
pub fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Mean similarity over all unordered site pairs at each Manhattan distance
/// `1..=d_max`, by sweeping every offset vector over the grid.
pub fn correlation_curve(
    field: &PhaseField,
    d_max: usize,
) -> Result<CorrelationCurve, CorrelationError> {
    let (rows, cols) = (field.rows, field.cols);
    let max = (rows + cols).saturating_sub(2);
    if d_max < 1 || d_max > max {
        return Err(CorrelationError::DMax {
            d_max,
            rows,
            cols,
            max,
        });
    }
    let entries = (1..=d_max)
        .into_par_iter()
        .map(|d| {
            let mut values = Vec::new();
            for dy in 0..=d.min(rows - 1) {
                let span = d - dy;
                let offsets: &[isize] = match (dy, span) {
                    (0, _) => &[1],
                    (_, 0) => &[0],
                    _ => &[1, -1],
                };
                for &sign in offsets {
                    let dx = sign * span as isize;
                    if span >= cols {
                        continue;
                    }
                    for r in 0..rows - dy {
                        for c in 0..cols {
                            let c2 = c as isize + dx;
                            if c2 < 0 || c2 >= cols as isize {
                                continue;
                            }
                            values
                                .push(similarity(field.get(r, c), field.get(r + dy, c2 as usize)));
                        }
                    }
                }
            }
            let pair_count = values.len();
            let c = if pair_count == 0 {
                0.0
            } else {
                order_free_sum(&mut values) / pair_count as f64
            };
            CorrelationEntry { d, c, pair_count }
        })
        .collect();
    Ok(CorrelationCurve { entries })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    #[default]
    Raw,
    #[serde(alias = "floor_subtracted")]
    Floor,
}

impl std::str::FromStr for FitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Self::Raw),
            "floor" | "floor_subtracted" => Ok(Self::Floor),
            other => Err(format!(
                "unknown fit mode `{other}` (expected raw or floor)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub mode: FitMode,
    /// Fraction of the largest distances averaged into the similarity floor.
    pub floor_quantile: f64,
    pub min_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: FitMode::Raw,
            floor_quantile: 0.25,
            min_points: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub xi: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub d_range: (usize, usize),
    pub floor: f64,
}

/// Mean of `C(d)` over the top `quantile` of distances.
pub fn similarity_floor(curve: &CorrelationCurve, quantile: f64) -> f64 {
    let n = curve.entries.len();
    if n == 0 {
        return 0.0;
    }
    let take = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    curve.entries[n - take..].iter().map(|e| e.c).sum::<f64>() / take as f64
}

/// Fits `C(d) ~ A exp(-d / xi)` by least squares on the logarithm.
///
/// Raw mode uses `ln C(d)` for `d` up to the last distance where `C` clears
/// `max(0.05, 1.5 C_floor)`. Floor mode uses `ln(C(d) - C_floor)` up to the
/// last distance where the excess clears 5% of its value at the first
/// distance.
pub fn fit_correlation_length(
    curve: &CorrelationCurve,
    options: &FitOptions,
) -> Result<FitResult, CorrelationError> {
    let floor = similarity_floor(curve, options.floor_quantile);
    let entries = &curve.entries;
    let everything: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.c > 0.0)
        .map(|e| (e.d as f64, e.c.ln()))
        .collect();
    if everything.len() >= 2 {
        let (slope, _, _) = least_squares(&everything);
        if !(slope < 0.0) {
            return Err(CorrelationError::NoDecay { slope });
        }
    }
    let (offset, threshold) = match options.mode {
        FitMode::Raw => (0.0, (1.5 * floor).max(0.05)),
        FitMode::Floor => {
            let head = entries.first().map_or(0.0, |e| e.c) - floor;
            (floor, (0.05 * head).max(1e-3))
        }
    };
    let d_fit = entries
        .iter()
        .filter(|e| e.c - offset > threshold)
        .map(|e| e.d)
        .max();
    let points: Vec<(f64, f64)> = match d_fit {
        Some(d_fit) => entries
            .iter()
            .filter(|e| e.d >= 1 && e.d <= d_fit && e.c - offset > 0.0)
            .map(|e| (e.d as f64, (e.c - offset).ln()))
            .collect(),
        None => Vec::new(),
    };
    let needed = options.min_points.max(2);
    if points.len() < needed {
        return Err(CorrelationError::FitFailed {
            usable: points.len(),
            needed,
        });
    }
    let (slope, intercept, r_squared) = least_squares(&points);
    if !(slope < 0.0) {
        return Err(CorrelationError::NoDecay { slope });
    }
    let first = points.first().map_or(0.0, |p| p.0) as usize;
    let last = points.last().map_or(0.0, |p| p.0) as usize;
    Ok(FitResult {
        xi: -1.0 / slope,
        amplitude: intercept.exp(),
        r_squared,
        d_range: (first, last),
        floor,
    })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, intercept, r_squared)
}

/// Outcome of fitting one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SnapshotFit {
    Fit(FitResult),
    /// `C(d)` does not decay: correlations span the whole lattice.
    Saturated,
    Failed {
        reason: String,
    },
}

impl SnapshotFit {
    pub fn xi(&self) -> Option<f64> {
        match self {
            Self::Fit(fit) => Some(fit.xi),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub curve: CorrelationCurve,
    pub fit: SnapshotFit,
}

/// Correlation curve and fit of every snapshot in a trajectory.
pub fn correlation_timeseries(
    snapshots: &[PhaseField],
    d_max: usize,
    options: &FitOptions,
) -> Result<Vec<TimePoint>, CorrelationError> {
    if let Some(first) = snapshots.first() {
        if snapshots
            .iter()
            .any(|f| f.rows != first.rows || f.cols != first.cols)
        {
            return Err(CorrelationError::ShapeMismatch);
        }
    }
    snapshots
        .iter()
        .map(|field| {
            let curve = correlation_curve(field, d_max)?;
            let fit = match fit_correlation_length(&curve, options) {
                Ok(fit) => SnapshotFit::Fit(fit),
                Err(CorrelationError::NoDecay { .. }) => SnapshotFit::Saturated,
                Err(e) => SnapshotFit::Failed {
                    reason: e.to_string(),
                },
            };
            Ok(TimePoint {
                t: field.snapshot_time,
                curve,
                fit,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiSummary {
    pub t: f64,
    pub xi_mean: f64,
    pub xi_std: f64,
    pub r_squared_mean: f64,
    /// Seeds with a successful fit at this time.
    pub fitted: usize,
    pub saturated: usize,
}

/// Mean and sample standard deviation of `xi` across seeds at each snapshot
/// time. Every series must list the same times.
pub fn aggregate_timeseries(series: &[Vec<TimePoint>]) -> Vec<XiSummary> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let fits: Vec<&FitResult> = series
                .iter()
                .filter_map(|s| match &s[i].fit {
                    SnapshotFit::Fit(fit) => Some(fit),
                    _ => None,
                })
                .collect();
            let saturated = series
                .iter()
                .filter(|s| s[i].fit == SnapshotFit::Saturated)
                .count();
            let n = fits.len() as f64;
            let (xi_mean, xi_std, r_squared_mean) = if fits.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let mean = fits.iter().map(|f| f.xi).sum::<f64>() / n;
                let var = if fits.len() > 1 {
                    fits.iter().map(|f| (f.xi - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (
                    mean,
                    var.sqrt(),
                    fits.iter().map(|f| f.r_squared).sum::<f64>() / n,
                )
            };
            XiSummary {
                t: first[i].t,
                xi_mean,
                xi_std,
                r_squared_mean,
                fitted: fits.len(),
                saturated,
            }
        })
        .collect()
}
