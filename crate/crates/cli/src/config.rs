//! Experiment configuration files (TOML or JSON) and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use ringosc::correlation::{FitMode, FitOptions};
use ringosc::lattice::{Boundary, ConnectivityTemplate, LatticeDescription, Orientation};
use ringosc::ring::{OrbitParams, RingSpec};
use ringosc::SchmittConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Ring,
    PeriodTable,
    Lattice,
    Correlation,
    NeuronDemo,
    Validate,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Ring => "ring",
            Kind::PeriodTable => "period-table",
            Kind::Lattice => "lattice",
            Kind::Correlation => "correlation",
            Kind::NeuronDemo => "neuron-demo",
            Kind::Validate => "validate",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSection {
    pub n: usize,
    pub allow_odd: bool,
}

impl Default for RingSection {
    fn default() -> Self {
        Self {
            n: 6,
            allow_odd: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodTableSection {
    pub n: Vec<usize>,
    /// Onset intervals averaged for the empirical period.
    pub periods: usize,
}

impl Default for PeriodTableSection {
    fn default() -> Self {
        Self {
            n: vec![4, 6, 8, 10, 12],
            periods: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub half_period: f64,
    pub beta: f64,
    pub v0: f64,
    pub dt: f64,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self {
            half_period: 5.0,
            beta: 3.0,
            v0: 0.0,
            dt: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub burn_in: f64,
    /// Horizon for orbit detection of single rings.
    pub max_time: f64,
    /// Horizon for phase reduction of lattice sites.
    pub phase_max_time: f64,
    pub recur_tol: f64,
}

impl Default for OrbitSection {
    fn default() -> Self {
        let orbit = OrbitParams::default();
        Self {
            burn_in: orbit.burn_in,
            max_time: orbit.max_time,
            phase_max_time: 200.0,
            recur_tol: orbit.recur_tol,
        }
    }
}

impl OrbitSection {
    pub fn ring_params(&self) -> OrbitParams {
        OrbitParams {
            burn_in: self.burn_in,
            max_time: self.max_time,
            recur_tol: self.recur_tol,
        }
    }

    pub fn phase_params(&self) -> OrbitParams {
        OrbitParams {
            max_time: self.phase_max_time,
            ..self.ring_params()
        }
    }
}

fn default_lattice() -> LatticeDescription {
    LatticeDescription {
        rows: 100,
        cols: 100,
        template: Some(ConnectivityTemplate {
            n: 6,
            l: 1,
            t: 2,
            r: 1,
            b: 2,
        }),
        templates: None,
        boundary: Boundary::Open,
        seed_parity: Orientation::default(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub neuron: SchmittConfig,
    pub ring: RingSection,
    pub lattice: LatticeDescription,
    /// Target fraction of firing neurons in random initial states.
    pub fraction: f64,
    /// Ring census only: seed `i` starts from `fractions[i % len]`.
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Snapshot times in units of tau. Empty means a kind-specific default.
    pub snapshots: Vec<f64>,
    pub snapshot_every: Option<f64>,
    pub t_end: Option<f64>,
    pub d_max: Option<usize>,
    pub fit: FitOptions,
    pub orbit: OrbitSection,
    pub period_table: PeriodTableSection,
    pub demo: DemoSection,
    pub workers: usize,
    pub write_events: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            neuron: SchmittConfig::default(),
            ring: RingSection::default(),
            lattice: default_lattice(),
            fraction: 0.3,
            fractions: Vec::new(),
            seeds: vec![1],
            snapshots: Vec::new(),
            snapshot_every: None,
            t_end: None,
            d_max: None,
            fit: FitOptions::default(),
            orbit: OrbitSection::default(),
            period_table: PeriodTableSection::default(),
            demo: DemoSection::default(),
            workers: 1,
            write_events: false,
            out: None,
        }
    }
}

/// Values given on the command line; each one replaces the file value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub snapshots: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub d_max: Option<usize>,
    pub fit_mode: Option<FitMode>,
    pub workers: Option<usize>,
}

/// Where a config came from, for error messages that point at a line.
#[derive(Clone, Debug, Default)]
pub struct Source {
    pub path: Option<PathBuf>,
    pub text: String,
}

impl Source {
    /// Line of the first assignment to `key`, 1-based.
    fn line_of(&self, key: &str) -> Option<usize> {
        let toml_key = format!("{key} ");
        let toml_eq = format!("{key}=");
        let json_key = format!("\"{key}\"");
        self.text
            .lines()
            .position(|line| {
                let l = line.trim_start();
                l.starts_with(&toml_key) || l.starts_with(&toml_eq) || l.starts_with(&json_key)
            })
            .map(|i| i + 1)
    }

    fn error(&self, key: &str, message: impl fmt::Display) -> CliError {
        let location = match (&self.path, self.line_of(key)) {
            (Some(p), Some(line)) => format!("{}:{line}: ", p.display()),
            (Some(p), None) => format!("{}: ", p.display()),
            (None, _) => String::new(),
        };
        CliError::Config(format!("{location}{key}: {message}"))
    }
}

/// Parses a config file; `.json` files are JSON, anything else TOML.
pub fn load(path: &Path) -> Result<(ExperimentConfig, Source), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = parse(&text, path)?;
    Ok((
        config,
        Source {
            path: Some(path.to_path_buf()),
            text,
        },
    ))
}

pub fn parse(text: &str, path: &Path) -> Result<ExperimentConfig, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), e.line())))
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Parses `A..B` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|e| format!("seed range start `{a}`: {e}"))?;
        let b = b.trim().trim_start_matches('=');
        let b: u64 = b
            .parse()
            .map_err(|e| format!("seed range end `{b}`: {e}"))?;
        if b < a {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("seed `{x}`: {e}")))
        .collect()
}

pub fn parse_times(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("time `{x}`: {e}")))
        .collect()
}

/// A config with every default filled in and every check passed.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub out: PathBuf,
}

impl Resolved {
    pub fn ring_spec(&self) -> RingSpec {
        RingSpec {
            allow_odd: self.config.ring.allow_odd,
            ..RingSpec::new(self.config.ring.n, self.config.neuron)
        }
    }

    /// Initial firing fraction of the `index`-th seed of a ring census.
    pub fn ring_fraction(&self, index: usize) -> f64 {
        let f = &self.config.fractions;
        if f.is_empty() {
            self.config.fraction
        } else {
            f[index % f.len()]
        }
    }

    pub fn d_max(&self) -> usize {
        let l = &self.config.lattice;
        self.config
            .d_max
            .unwrap_or_else(|| (l.rows.min(l.cols) / 2).max(1))
    }

    /// Hash of everything that determines a trajectory for a given seed.
    pub fn dynamics_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            kind: Kind,
            neuron: &'a SchmittConfig,
            ring: Option<&'a RingSection>,
            lattice: Option<&'a LatticeDescription>,
            fraction: f64,
            fractions: &'a [f64],
        }
        let lattice_kind = matches!(self.kind, Kind::Lattice | Kind::Correlation);
        let key = Key {
            // Lattice and correlation runs share trajectories.
            kind: if lattice_kind {
                Kind::Lattice
            } else {
                self.kind
            },
            neuron: &self.config.neuron,
            ring: (!lattice_kind).then_some(&self.config.ring),
            lattice: lattice_kind.then_some(&self.config.lattice),
            fraction: self.config.fraction,
            fractions: if lattice_kind {
                &[]
            } else {
                &self.config.fractions
            },
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn default_t_end(kind: Kind) -> f64 {
    match kind {
        Kind::Ring => 200.0,
        Kind::NeuronDemo => 20.0,
        _ => 150.0,
    }
}

pub fn default_out_root() -> PathBuf {
    std::env::var_os("RINGOSC_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Applies overrides, fills defaults and validates.
pub fn resolve(
    kind: Kind,
    mut config: ExperimentConfig,
    source: &Source,
    o: Overrides,
) -> Result<Resolved, CliError> {
    if let Some(k) = config.kind {
        if k != kind {
            return Err(source.error(
                "kind",
                format!("file describes a {k} experiment, not {kind}"),
            ));
        }
    }
    config.kind = Some(kind);
    let flag = |name: &str, msg: String| CliError::Config(format!("--{name}: {msg}"));

    if let Some(seeds) = o.seeds {
        config.seeds = seeds;
    }
    if let Some(out) = o.out {
        config.out = Some(out);
    }
    if let Some(s) = o.snapshots {
        config.snapshots = s;
    }
    if let Some(t) = o.t_end {
        if !(t.is_finite() && t > 0.0) {
            return Err(flag("t-end", format!("must be positive (got {t})")));
        }
        config.t_end = Some(t);
    }
    if let Some(d) = o.d_max {
        config.d_max = Some(d);
    }
    if let Some(m) = o.fit_mode {
        config.fit.mode = m;
    }
    if let Some(w) = o.workers {
        config.workers = w;
    }

    config
        .neuron
        .validate()
        .map_err(|e| source.error("neuron", e))?;
    if !(0.0..=1.0).contains(&config.fraction) {
        return Err(source.error(
            "fraction",
            format!("must lie in [0, 1] (got {})", config.fraction),
        ));
    }
    if let Some(f) = config.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(source.error("fractions", format!("must lie in [0, 1] (got {f})")));
    }
    if config.seeds.is_empty() {
        return Err(source.error("seeds", "at least one seed is required"));
    }
    let mut unique = config.seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != config.seeds.len() {
        return Err(source.error("seeds", "seeds must be distinct"));
    }
    if config.workers == 0 {
        return Err(source.error("workers", "must be at least 1"));
    }
    let t_end = config.t_end.unwrap_or_else(|| default_t_end(kind));
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(source.error("t_end", format!("must be positive (got {t_end})")));
    }
    if !(0.0..=0.5).contains(&config.fit.floor_quantile) || config.fit.floor_quantile == 0.0 {
        return Err(source.error("floor_quantile", "must lie in (0, 0.5]"));
    }
    if config.fit.min_points < 2 {
        return Err(source.error("min_points", "must be at least 2"));
    }
    let orbit = &config.orbit;
    if !(orbit.burn_in >= 0.0
        && orbit.max_time > orbit.burn_in
        && orbit.phase_max_time > orbit.burn_in)
    {
        return Err(source.error(
            "orbit",
            "need 0 <= burn_in < max_time and burn_in < phase_max_time",
        ));
    }
    if !(orbit.recur_tol > 0.0) {
        return Err(source.error("recur_tol", "must be positive"));
    }

    let snapshots = resolve_snapshots(kind, &config, t_end, source)?;

    match kind {
        Kind::Ring => {
            let spec = RingSpec {
                allow_odd: config.ring.allow_odd,
                ..RingSpec::new(config.ring.n, config.neuron)
            };
            spec.validate().map_err(|e| source.error("n", e))?;
        }
        Kind::PeriodTable => {
            if config.period_table.n.is_empty() {
                return Err(source.error("n", "period table needs at least one ring size"));
            }
            if let Some(&n) = config.period_table.n.iter().find(|&&n| n < 2 || n % 2 == 1) {
                return Err(source.error("n", format!("ring size {n} is not an even number >= 2")));
            }
            if config.period_table.periods == 0 {
                return Err(source.error("periods", "must be at least 1"));
            }
        }
        Kind::Lattice | Kind::Correlation => {
            let l = &config.lattice;
            if l.rows == 0 || l.cols == 0 {
                return Err(source.error("rows", "lattice must have at least one row and column"));
            }
            if kind == Kind::Correlation {
                let max = l.rows + l.cols - 2;
                let d_max = config
                    .d_max
                    .unwrap_or_else(|| (l.rows.min(l.cols) / 2).max(1));
                if d_max == 0 || d_max > max {
                    return Err(
                        source.error("d_max", format!("must lie in 1..={max} for this lattice"))
                    );
                }
            }
        }
        Kind::NeuronDemo => {
            let d = &config.demo;
            if !(d.dt > 0.0 && d.half_period > 0.0 && d.beta > 0.0) {
                return Err(source.error("demo", "dt, half_period and beta must be positive"));
            }
        }
        Kind::Validate => {}
    }

    let out = config
        .out
        .clone()
        .unwrap_or_else(|| default_out_root().join(kind.name()));
    Ok(Resolved {
        kind,
        config,
        t_end,
        snapshots,
        out,
    })
}

fn resolve_snapshots(
    kind: Kind,
    config: &ExperimentConfig,
    t_end: f64,
    source: &Source,
) -> Result<Vec<f64>, CliError> {
    let mut times = config.snapshots.clone();
    if let Some(every) = config.snapshot_every {
        if !(every > 0.0) {
            return Err(source.error("snapshot_every", "must be positive"));
        }
        let count = (t_end / every + 1e-9).floor() as usize;
        times.extend((1..=count).map(|i| i as f64 * every));
    }
    if times.is_empty() {
        times = match kind {
            Kind::Correlation => {
                let count = (t_end / 2.0 + 1e-9).floor() as usize;
                (1..=count).map(|i| i as f64 * 2.0).collect()
            }
            _ => vec![t_end],
        };
    }
    if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(source.error("snapshots", format!("snapshot time {bad} is not positive")));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(source.error("snapshots", "snapshot times must be strictly increasing"));
    }
    if let Some(&last) = times.last() {
        if last > t_end {
            return Err(source.error(
                "snapshots",
                format!("snapshot time {last} exceeds t_end = {t_end}"),
            ));
        }
    }
    Ok(times)
}
