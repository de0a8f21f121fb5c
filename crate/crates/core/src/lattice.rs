//! Rectangular lattices of ring oscillators coupled by shared neurons.
//!
//! Each site holds an `N`-ring whose neurons are split into four arcs: `T`,
//! `R`, `B`, `L`, holding the neurons shared with the top, right, bottom and
//! left neighbours. Clockwise rings traverse T, R, B, L; counter-clockwise rings
//! traverse T, L, B, R. The anchor (traversal position 0) is the first neuron
//! of the T arc. Orientation alternates like a checkerboard, so a shared arc is
//! walked in the same geometric direction by both of its rings and the two
//! copies are identified element by element.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{
    random_initial_state, NetworkError, NetworkGraph, NetworkState, RandomInit, SchmittConfig,
};
use crate::ring::{on_orbit_state_with_period, stable_period, RingError, RingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("template sides {l}+{t}+{r}+{b} do not add up to ring size {n}")]
    TemplateSum {
        n: usize,
        l: usize,
        t: usize,
        r: usize,
        b: usize,
    },
    #[error("ring size {0} must be even and at least 2")]
    TemplateSize(usize),
    #[error("lattice must have at least one row and column, got {rows}x{cols}")]
    Dimensions { rows: usize, cols: usize },
    #[error("periodic boundary needs an even number of rows and columns, got {rows}x{cols}")]
    PeriodicParity { rows: usize, cols: usize },
    #[error("expected {expected} site templates, got {got}")]
    TemplateCount { expected: usize, got: usize },
    #[error("sites {a:?} and {b:?} disagree on their shared arc ({a_count} vs {b_count} neurons)")]
    SharedArcMismatch {
        a: (usize, usize),
        b: (usize, usize),
        a_count: usize,
        b_count: usize,
    },
    #[error("sites {a:?} and {b:?} do not share a ring size")]
    RingSizeMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("arc identification produced the bidirectional pair {0} <-> {1}")]
    Bidirectional(usize, usize),
    #[error("no {k}-colouring exists: edge {from} -> {to} conflicts")]
    Infeasible { k: usize, from: usize, to: usize },
    #[error("site ({row}, {col}) is outside the {rows}x{cols} lattice")]
    SiteOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Ring(#[from] RingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityTemplate {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "B")]
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Cw,
    Ccw,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Self::Cw => Self::Ccw,
            Self::Ccw => Self::Cw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Top,
    Right,
    Bottom,
    Left,
}

impl ConnectivityTemplate {
    pub fn new(n: usize, l: usize, t: usize, r: usize, b: usize) -> Result<Self, LatticeError> {
        let tpl = Self { n, l, t, r, b };
        tpl.validate()?;
        Ok(tpl)
    }

    /// The fully shared template with `n / 4` neurons per side.
    pub fn uniform(n: usize) -> Result<Self, LatticeError> {
        Self::new(n, n / 4, n / 4, n / 4, n / 4)
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.l + self.t + self.r + self.b != self.n {
            return Err(LatticeError::TemplateSum {
                n: self.n,
                l: self.l,
                t: self.t,
                r: self.r,
                b: self.b,
            });
        }
        if self.n < 2 || self.n % 2 == 1 {
            return Err(LatticeError::TemplateSize(self.n));
        }
        Ok(())
    }

    fn count(&self, side: Side) -> usize {
        match side {
            Side::Top => self.t,
            Side::Right => self.r,
            Side::Bottom => self.b,
            Side::Left => self.l,
        }
    }
}

/// Horizontal reflection swaps L and R, vertical swaps T and B.
pub fn reflect_template(tpl: &ConnectivityTemplate, axis: Axis) -> ConnectivityTemplate {
    match axis {
        Axis::Horizontal => ConnectivityTemplate {
            l: tpl.r,
            r: tpl.l,
            ..*tpl
        },
        Axis::Vertical => ConnectivityTemplate {
            t: tpl.b,
            b: tpl.t,
            ..*tpl
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    pub template: ConnectivityTemplate,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub seed_parity: Orientation,
}

impl LatticeSpec {
    pub fn new(rows: usize, cols: usize, template: ConnectivityTemplate) -> Self {
        Self {
            rows,
            cols,
            template,
            boundary: Boundary::Open,
            seed_parity: Orientation::Cw,
        }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        self.template.validate()?;
        check_dimensions(self.rows, self.cols, self.boundary)
    }

    /// Template of a site: the seed reflected once per odd column and row
    /// offset.
    pub fn site_template(&self, row: usize, col: usize) -> ConnectivityTemplate {
        let mut tpl = self.template;
        if col % 2 == 1 {
            tpl = reflect_template(&tpl, Axis::Horizontal);
        }
        if row % 2 == 1 {
            tpl = reflect_template(&tpl, Axis::Vertical);
        }
        tpl
    }
}

fn check_dimensions(rows: usize, cols: usize, boundary: Boundary) -> Result<(), LatticeError> {
    if rows == 0 || cols == 0 {
        return Err(LatticeError::Dimensions { rows, cols });
    }
    if boundary == Boundary::Periodic && (rows % 2 == 1 || cols % 2 == 1) {
        return Err(LatticeError::PeriodicParity { rows, cols });
    }
    Ok(())
}

/// A lattice with per-site templates, as stored in lattice description files.
/// Either `template` (reflection-generated) or `templates` (row-major, one
/// per site) must be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDescription {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<ConnectivityTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<ConnectivityTemplate>>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub seed_parity: Orientation,
}

impl LatticeDescription {
    pub fn build(&self) -> Result<LatticeGraph, LatticeError> {
        match (&self.template, &self.templates) {
            (_, Some(templates)) => build_lattice_from_templates(
                self.rows,
                self.cols,
                templates,
                self.boundary,
                self.seed_parity,
            ),
            (Some(template), None) => build_lattice(&LatticeSpec {
                rows: self.rows,
                cols: self.cols,
                template: *template,
                boundary: self.boundary,
                seed_parity: self.seed_parity,
            }),
            (None, None) => Err(LatticeError::TemplateCount {
                expected: self.rows * self.cols,
                got: 0,
            }),
        }
    }
}

impl From<&LatticeSpec> for LatticeDescription {
    fn from(spec: &LatticeSpec) -> Self {
        Self {
            rows: spec.rows,
            cols: spec.cols,
            template: Some(spec.template),
            templates: None,
            boundary: spec.boundary,
            seed_parity: spec.seed_parity,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGraph {
    pub graph: NetworkGraph,
    pub rows: usize,
    pub cols: usize,
    pub boundary: Boundary,
    /// Neurons of each site's ring in traversal order from the anchor,
    /// row-major over sites.
    pub site_rings: Vec<Vec<usize>>,
    pub site_templates: Vec<ConnectivityTemplate>,
    pub orientations: Vec<Orientation>,
    pub anchors: Vec<usize>,
}

impl LatticeGraph {
    pub fn site_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn site_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn site_coords(&self, site: usize) -> (usize, usize) {
        (site / self.cols, site % self.cols)
    }

    pub fn check_site(&self, row: usize, col: usize) -> Result<usize, LatticeError> {
        if row >= self.rows || col >= self.cols {
            return Err(LatticeError::SiteOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.site_index(row, col))
    }

    pub fn neuron_count(&self) -> usize {
        self.graph.len()
    }

    /// Number of rings each neuron belongs to.
    pub fn membership(&self) -> Vec<u8> {
        let mut counts = vec![0u8; self.graph.len()];
        for ring in &self.site_rings {
            for &neuron in ring {
                counts[neuron] += 1;
            }
        }
        counts
    }

    /// Ring size shared by every site, if the lattice is uniform.
    pub fn ring_size(&self) -> Option<usize> {
        let n = self.site_templates.first()?.n;
        self.site_templates.iter().all(|t| t.n == n).then_some(n)
    }
}

fn arc_order(orientation: Orientation) -> [Side; 4] {
    match orientation {
        Orientation::Cw => [Side::Top, Side::Right, Side::Bottom, Side::Left],
        Orientation::Ccw => [Side::Top, Side::Left, Side::Bottom, Side::Right],
    }
}

fn side_slot(side: Side) -> usize {
    match side {
        Side::Top => 0,
        Side::Right => 1,
        Side::Bottom => 2,
        Side::Left => 3,
    }
}

/// Builds the reflection-generated homogeneous lattice.
pub fn build_lattice(spec: &LatticeSpec) -> Result<LatticeGraph, LatticeError> {
    spec.validate()?;
    let templates: Vec<_> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| (r, c)))
        .map(|(r, c)| spec.site_template(r, c))
        .collect();
    build_lattice_from_templates(
        spec.rows,
        spec.cols,
        &templates,
        spec.boundary,
        spec.seed_parity,
    )
}

/// Builds a lattice from explicit row-major per-site templates. Adjacent
/// sites must agree on the size of their shared arc.
pub fn build_lattice_from_templates(
    rows: usize,
    cols: usize,
    templates: &[ConnectivityTemplate],
    boundary: Boundary,
    seed_parity: Orientation,
) -> Result<LatticeGraph, LatticeError> {
    check_dimensions(rows, cols, boundary)?;
    if templates.len() != rows * cols {
        return Err(LatticeError::TemplateCount {
            expected: rows * cols,
            got: templates.len(),
        });
    }
    for tpl in templates {
        tpl.validate()?;
    }
    let at = |r: usize, c: usize| &templates[r * cols + c];
    let periodic = boundary == Boundary::Periodic;
    for r in 0..rows {
        for c in 0..cols {
            let here = at(r, c);
            let right = (c + 1 < cols || periodic).then(|| (r, (c + 1) % cols));
            let below = (r + 1 < rows || periodic).then(|| ((r + 1) % rows, c));
            if let Some((rr, cc)) = right {
                if here.r != at(rr, cc).l {
                    return Err(LatticeError::SharedArcMismatch {
                        a: (r, c),
                        b: (rr, cc),
                        a_count: here.r,
                        b_count: at(rr, cc).l,
                    });
                }
            }
            if let Some((rr, cc)) = below {
                if here.b != at(rr, cc).t {
                    return Err(LatticeError::SharedArcMismatch {
                        a: (r, c),
                        b: (rr, cc),
                        a_count: here.b,
                        b_count: at(rr, cc).t,
                    });
                }
            }
        }
    }

    let sites = rows * cols;
    let orientation_of = |r: usize, c: usize| {
        if (r + c).is_multiple_of(2) {
            seed_parity
        } else {
            seed_parity.flipped()
        }
    };
    // Reuse arcs of already built partners; fresh neurons are numbered in
    // traversal order.
    let mut arcs: Vec<[Vec<usize>; 4]> = Vec::with_capacity(sites);
    let mut next_neuron = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            let tpl = at(r, c);
            let mut site_arcs: [Option<Vec<usize>>; 4] = [None, None, None, None];
            if r > 0 {
                site_arcs[side_slot(Side::Top)] =
                    Some(arcs[(r - 1) * cols + c][side_slot(Side::Bottom)].clone());
            }
            if c > 0 {
                site_arcs[side_slot(Side::Left)] =
                    Some(arcs[r * cols + c - 1][side_slot(Side::Right)].clone());
            }
            if periodic && c + 1 == cols && cols > 1 {
                site_arcs[side_slot(Side::Right)] =
                    Some(arcs[r * cols][side_slot(Side::Left)].clone());
            }
            if periodic && r + 1 == rows && rows > 1 {
                site_arcs[side_slot(Side::Bottom)] = Some(arcs[c][side_slot(Side::Top)].clone());
            }
            for side in arc_order(orientation_of(r, c)) {
                let slot = &mut site_arcs[side_slot(side)];
                if slot.is_none() {
                    let count = tpl.count(side);
                    *slot = Some((next_neuron..next_neuron + count).collect());
                    next_neuron += count;
                }
            }
            arcs.push(site_arcs.map(Option::unwrap_or_default));
        }
    }

    let mut site_rings = Vec::with_capacity(sites);
    let mut orientations = Vec::with_capacity(sites);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let orientation = orientation_of(r, c);
            let site_arcs = &arcs[r * cols + c];
            let ring: Vec<usize> = arc_order(orientation)
                .iter()
                .flat_map(|&side| site_arcs[side_slot(side)].iter().copied())
                .collect();
            let n = ring.len();
            edges.extend((0..n).map(|i| (ring[i], ring[(i + 1) % n])));
            site_rings.push(ring);
            orientations.push(orientation);
        }
    }
    let graph = NetworkGraph::from_edges(next_neuron, edges)?;
    let two_rings = templates.iter().all(|t| t.n == 2);
    if !two_rings {
        if let Some((a, b)) = graph.edges().find(|&(a, b)| a < b && graph.has_edge(b, a)) {
            return Err(LatticeError::Bidirectional(a, b));
        }
    }
    let anchors = site_rings.iter().map(|ring| ring[0]).collect();
    Ok(LatticeGraph {
        graph,
        rows,
        cols,
        boundary,
        site_rings,
        site_templates: templates.to_vec(),
        orientations,
        anchors,
    })
}

/// Colouring with `c(child) = c(parent) + 1 mod k` on every edge, seeded with
/// colour 0 at the lowest neuron of each weakly connected component.
pub fn homogeneity_coloring(graph: &NetworkGraph, k: usize) -> Result<Vec<usize>, LatticeError> {
    let k_nonzero = k.max(1);
    let mut colour: Vec<Option<usize>> = vec![None; graph.len()];
    let mut queue = VecDeque::new();
    for seed in 0..graph.len() {
        if colour[seed].is_some() {
            continue;
        }
        colour[seed] = Some(0);
        queue.push_back(seed);
        while let Some(node) = queue.pop_front() {
            let c = colour[node].unwrap_or(0);
            let forward = graph
                .children(node)
                .iter()
                .map(|&j| (j, (c + 1) % k_nonzero, (node, j)));
            let backward = graph
                .parents(node)
                .iter()
                .map(|&j| (j, (c + k_nonzero - 1) % k_nonzero, (j, node)));
            for (next, want, edge) in forward.chain(backward) {
                match colour[next] {
                    None => {
                        colour[next] = Some(want);
                        queue.push_back(next);
                    }
                    Some(have) if have != want => {
                        return Err(LatticeError::Infeasible {
                            k,
                            from: edge.0,
                            to: edge.1,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }
    Ok(colour.into_iter().map(|c| c.unwrap_or(0)).collect())
}

/// Synchronized lattice state in which every neuron behaves as ring position
/// `colour` of the single-ring `k`-pulse orbit at phase `theta`.
pub fn global_orbit_state(
    lattice: &LatticeGraph,
    cfg: &SchmittConfig,
    k: usize,
    theta: f64,
) -> Result<NetworkState, LatticeError> {
    let n = lattice.ring_size().ok_or(LatticeError::RingSizeMismatch {
        a: (0, 0),
        b: (0, 0),
    })?;
    let period = stable_period(n, k, cfg.v_thl).ok_or(RingError::NoPeriod {
        n,
        k,
        v_thl: cfg.v_thl,
    })?;
    global_orbit_state_with_period(lattice, cfg, k, theta, period * cfg.tau)
}

pub fn global_orbit_state_with_period(
    lattice: &LatticeGraph,
    cfg: &SchmittConfig,
    k: usize,
    theta: f64,
    period: f64,
) -> Result<NetworkState, LatticeError> {
    let n = lattice.ring_size().ok_or(LatticeError::RingSizeMismatch {
        a: (0, 0),
        b: (0, 0),
    })?;
    let colours = homogeneity_coloring(&lattice.graph, n)?;
    let ring = on_orbit_state_with_period(&RingSpec::new(n, *cfg), k, theta, period)?;
    Ok(NetworkState {
        v: colours.iter().map(|&c| ring.v[c]).collect(),
        y: colours.iter().map(|&c| ring.y[c]).collect(),
        t: 0.0,
    })
}

pub fn lattice_random_state(
    lattice: &LatticeGraph,
    cfg: &SchmittConfig,
    fraction: f64,
    seed: u64,
) -> Result<RandomInit, LatticeError> {
    Ok(random_initial_state(&lattice.graph, cfg, fraction, seed)?)
}

/// Number of neurons shared between adjacent sites, counted per adjacent pair.
pub fn shared_neuron_count(lattice: &LatticeGraph) -> usize {
    let (rows, cols) = (lattice.rows, lattice.cols);
    let periodic = lattice.boundary == Boundary::Periodic;
    let mut shared = 0;
    for r in 0..rows {
        for c in 0..cols {
            let tpl = &lattice.site_templates[r * cols + c];
            if c + 1 < cols || (periodic && cols > 1) {
                shared += tpl.r;
            }
            if r + 1 < rows || (periodic && rows > 1) {
                shared += tpl.b;
            }
        }
    }
    shared
}

/// Sites whose ring contains `neuron`, ascending.
pub fn sites_of_neuron(lattice: &LatticeGraph, neuron: usize) -> Vec<usize> {
    (0..lattice.site_count())
        .filter(|&site| lattice.site_rings[site].contains(&neuron))
        .collect()
}
