mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringosc::correlation::{
    aggregate_timeseries, correlation_curve, correlation_timeseries, fit_correlation_length,
    similarity, CorrelationCurve, CorrelationError, FitMode, FitOptions, SnapshotFit,
};
use ringosc::io::{read_correlation_csv, write_correlation_csv};
use ringosc::phase::{PhaseField, RingPhase};

use common::brute_force_correlation;

fn phase(k: usize, theta: f64) -> RingPhase {
    RingPhase {
        k,
        theta,
        converged: true,
    }
}

fn field(rows: usize, cols: usize, f: impl Fn(usize, usize) -> RingPhase) -> PhaseField {
    PhaseField {
        rows,
        cols,
        snapshot_time: 0.0,
        sites: (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect(),
    }
}

fn random_field(rows: usize, cols: usize, seed: u64, ks: usize) -> PhaseField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = (0..rows * cols)
        .map(|_| RingPhase {
            k: 1 + rng.random_range(0..ks),
            theta: rng.random_range(0.0..1.0),
            converged: rng.random_range(0.0..1.0) > 0.05,
        })
        .collect();
    PhaseField {
        rows,
        cols,
        snapshot_time: 0.0,
        sites,
    }
}

fn analytic_pairs(rows: usize, cols: usize, d: usize) -> usize {
    let mut total = 0;
    for dy in 0..=d {
        let dx = d - dy;
        if dy >= rows || dx >= cols {
            continue;
        }
        let count = (rows - dy) * (cols - dx);
        total += if dy == 0 || dx == 0 { count } else { 2 * count };
    }
    total
}

#[test]
fn similarity_examples() {
    assert_eq!(similarity(&phase(2, 0.3), &phase(2, 0.3)), 1.0);
    assert!(similarity(&phase(2, 0.1), &phase(2, 0.6)) < 1e-30);
    assert_eq!(similarity(&phase(2, 0.1), &phase(3, 0.1)), 0.0);
    assert!((similarity(&phase(2, 0.0), &phase(2, 0.25)) - 0.5).abs() < 1e-15);
    let lost = RingPhase {
        converged: false,
        ..phase(2, 0.3)
    };
    assert_eq!(similarity(&lost, &phase(2, 0.3)), 0.0);
}

#[test]
fn offset_sweep_equals_all_pairs() {
    for (rows, cols, seed) in [
        (12, 12, 1),
        (12, 12, 2),
        (7, 12, 3),
        (12, 5, 4),
        (1, 9, 5),
        (9, 1, 6),
    ] {
        let f = random_field(rows, cols, seed, 2);
        let d_max = rows + cols - 2;
        let curve = correlation_curve(&f, d_max).unwrap();
        let reference = brute_force_correlation(&f, d_max);
        for (entry, (d, c, count)) in curve.entries.iter().zip(reference) {
            assert_eq!(entry.d, d);
            assert_eq!(entry.pair_count, count);
            assert_eq!(entry.pair_count, analytic_pairs(rows, cols, d));
            assert_eq!(entry.c.to_bits(), c.to_bits(), "{rows}x{cols} d={d}");
        }
    }
}

#[test]
fn d_max_is_checked() {
    let f = random_field(4, 5, 0, 1);
    assert!(matches!(
        correlation_curve(&f, 0),
        Err(CorrelationError::DMax { .. })
    ));
    assert!(matches!(
        correlation_curve(&f, 8),
        Err(CorrelationError::DMax { .. })
    ));
    assert!(correlation_curve(&f, 7).is_ok());
}

#[test]
fn structured_fields() {
    let uniform = field(8, 8, |_, _| phase(2, 0.4));
    assert!(correlation_curve(&uniform, 10)
        .unwrap()
        .entries
        .iter()
        .all(|e| e.c == 1.0));

    let checker = field(8, 8, |r, c| {
        phase(2, if (r + c) % 2 == 0 { 0.1 } else { 0.6 })
    });
    let curve = correlation_curve(&checker, 4).unwrap();
    assert!(curve.entries[0].c < 1e-30);
    assert_eq!(curve.entries[1].c, 1.0);
}

#[test]
fn independent_phases_average_one_half() {
    let f = {
        let mut f = random_field(60, 60, 11, 1);
        f.sites.iter_mut().for_each(|s| s.converged = true);
        f
    };
    for entry in correlation_curve(&f, 12).unwrap().entries {
        // cos^2 of a uniform phase difference has mean 1/2 and variance 1/8;
        // pair differences are pairwise independent.
        let sigma = (0.125 / entry.pair_count as f64).sqrt();
        assert!(
            (entry.c - 0.5).abs() <= 3.0 * sigma,
            "d={} C={}",
            entry.d,
            entry.c
        );
    }
}

fn synthetic(f: impl Fn(f64) -> f64, d_max: usize) -> CorrelationCurve {
    let values: Vec<(usize, f64)> = (1..=d_max).map(|d| (d, f(d as f64))).collect();
    CorrelationCurve::from_values(&values)
}

#[test]
fn raw_fit_recovers_pure_exponentials() {
    for (xi, d_max) in [(5.0, 40), (2.0, 20), (8.0, 60)] {
        let curve = synthetic(|d: f64| (-d / xi).exp(), d_max);
        let fit = fit_correlation_length(&curve, &FitOptions::default()).unwrap();
        assert!(((fit.xi - xi) / xi).abs() <= 0.01, "xi={xi}: {}", fit.xi);
        assert!(fit.r_squared > 0.999);
        assert_eq!(fit.d_range.0, 1);
    }
}

#[test]
fn floor_fit_recovers_offset_exponentials() {
    let curve = synthetic(|d: f64| 0.4 * (-d / 3.0).exp() + 0.5, 40);
    let options = FitOptions {
        mode: FitMode::Floor,
        ..FitOptions::default()
    };
    let fit = fit_correlation_length(&curve, &options).unwrap();
    assert!(((fit.xi - 3.0) / 3.0).abs() <= 0.02, "{}", fit.xi);
    assert!((fit.floor - 0.5).abs() < 1e-3);
}

#[test]
fn degenerate_curves() {
    let zeros = synthetic(|_| 0.0, 20);
    assert!(matches!(
        fit_correlation_length(&zeros, &FitOptions::default()),
        Err(CorrelationError::FitFailed { .. })
    ));
    let ones = synthetic(|_| 1.0, 20);
    assert!(matches!(
        fit_correlation_length(&ones, &FitOptions::default()),
        Err(CorrelationError::NoDecay { .. })
    ));
    let uniform = field(10, 10, |_, _| phase(3, 0.2));
    let series =
        correlation_timeseries(&[uniform.clone(), uniform], 8, &FitOptions::default()).unwrap();
    assert!(series.iter().all(|p| p.fit == SnapshotFit::Saturated));
    let summary = aggregate_timeseries(&[series]);
    assert_eq!(summary[0].saturated, 1);
    assert_eq!(summary[0].fitted, 0);
    assert!(summary[0].xi_mean.is_nan());
}

#[test]
fn fits_round_trip() {
    let noisy = synthetic(
        |d: f64| 0.9 * (-d / 4.0).exp() * (1.0 + 0.03 * (d * 1.7).sin()),
        30,
    );
    let first = fit_correlation_length(&noisy, &FitOptions::default()).unwrap();
    let (a, xi) = (first.amplitude, first.xi);
    let regenerated = synthetic(|d: f64| a * (-d / xi).exp(), 30);
    let second = fit_correlation_length(&regenerated, &FitOptions::default()).unwrap();
    assert!(((second.xi - xi) / xi).abs() <= 0.01);
}

#[test]
fn timeseries_aggregate_and_files() {
    let square = field(6, 6, |_, _| phase(1, 0.0));
    let wide = field(3, 12, |_, _| phase(1, 0.0));
    assert!(matches!(
        correlation_timeseries(&[square, wide], 4, &FitOptions::default()),
        Err(CorrelationError::ShapeMismatch)
    ));

    // Phases drift smoothly across the lattice, so nearby rings agree.
    let drifting = |scale: f64, t: f64| {
        let mut f = field(40, 40, |r, c| {
            phase(1, ((r + c) as f64 * scale).rem_euclid(1.0))
        });
        f.snapshot_time = t;
        f
    };
    let options = FitOptions {
        mode: FitMode::Floor,
        ..FitOptions::default()
    };
    let series: Vec<_> = [0.03, 0.04, 0.05]
        .iter()
        .map(|&scale| {
            correlation_timeseries(
                &[drifting(scale, 1.0), drifting(scale / 2.0, 2.0)],
                20,
                &options,
            )
            .unwrap()
        })
        .collect();
    let summary = aggregate_timeseries(&series);
    assert_eq!(summary.len(), 2);
    for (i, s) in summary.iter().enumerate() {
        assert_eq!(s.t, (i + 1) as f64);
        let xis: Vec<f64> = series.iter().filter_map(|x| x[i].fit.xi()).collect();
        assert_eq!(s.fitted, xis.len());
        if !xis.is_empty() {
            let mean = xis.iter().sum::<f64>() / xis.len() as f64;
            assert!((s.xi_mean - mean).abs() < 1e-12);
        }
    }

    let curve = &series[0][0].curve;
    let mut buf = Vec::new();
    write_correlation_csv(curve, &mut buf).unwrap();
    assert!(String::from_utf8(buf.clone())
        .unwrap()
        .starts_with("d,c,pair_count\n"));
    assert_eq!(&read_correlation_csv(&buf[..]).unwrap(), curve);
}

proptest! {
    #[test]
    fn similarity_properties(k1 in 1usize..4, k2 in 1usize..4, a in 0.0f64..1.0, b in 0.0f64..1.0, shift in -3.0f64..3.0) {
        let (p, q) = (phase(k1, a), phase(k2, b));
        let s = similarity(&p, &q);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, similarity(&q, &p));
        let moved = (phase(k1, (a + shift).rem_euclid(1.0)), phase(k2, (b + shift).rem_euclid(1.0)));
        prop_assert!((similarity(&moved.0, &moved.1) - s).abs() <= 1e-9);
        if k1 != k2 {
            prop_assert_eq!(s, 0.0);
        } else if s == 1.0 {
            prop_assert!(ringosc::phase::circular_distance(a, b) < 1e-7);
        }
    }

    #[test]
    fn sweep_matches_brute_force_correlation(rows in 1usize..9, cols in 1usize..9, seed: u64) {
        prop_assume!(rows + cols >= 3);
        let f = random_field(rows, cols, seed, 3);
        let d_max = rows + cols - 2;
        let curve = correlation_curve(&f, d_max).unwrap();
        for (entry, (_, c, count)) in curve.entries.iter().zip(brute_force_correlation(&f, d_max)) {
            prop_assert_eq!(entry.pair_count, count);
            prop_assert_eq!(entry.c.to_bits(), c.to_bits());
        }
    }
}
