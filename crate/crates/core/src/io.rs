//! CSV and JSON encodings of event logs, states, lattices and phase fields.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{CorrelationCurve, CorrelationEntry, XiSummary};
use crate::engine::EventRecord;
use crate::network::{NetworkGraph, NetworkState, TransitionKind, DORMANT, FIRING};
use crate::phase::{PhaseField, RingPhase};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub time: f64,
    pub neuron: usize,
    pub kind: TransitionKind,
}

/// One row per output change, autonomous stops first within an event.
pub fn event_rows(events: &[EventRecord]) -> Vec<EventRow> {
    events
        .iter()
        .flat_map(|r| {
            r.transitions().map(move |(neuron, kind)| EventRow {
                time: r.time,
                neuron,
                kind,
            })
        })
        .collect()
}

pub fn write_event_log<W: Write>(events: &[EventRecord], out: W) -> Result<(), IoError> {
    write_rows(event_rows(events), out)
}

pub fn read_event_log<R: Read>(input: R) -> Result<Vec<EventRow>, IoError> {
    read_rows(input)
}

pub fn write_rows<T: Serialize, W: Write>(
    rows: impl IntoIterator<Item = T>,
    out: W,
) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, IoError> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub row: usize,
    pub col: usize,
    pub k: usize,
    pub theta: f64,
    pub converged: bool,
}

pub fn write_phase_field_csv<W: Write>(field: &PhaseField, out: W) -> Result<(), IoError> {
    let rows = field.sites.iter().enumerate().map(|(i, s)| PhaseRow {
        row: i / field.cols,
        col: i % field.cols,
        k: s.k,
        theta: s.theta,
        converged: s.converged,
    });
    write_rows(rows, out)
}

/// Reads a phase field written by [`write_phase_field_csv`].
pub fn read_phase_field_csv<R: Read>(input: R, snapshot_time: f64) -> Result<PhaseField, IoError> {
    let rows: Vec<PhaseRow> = read_rows(input)?;
    let n_rows = rows.iter().map(|r| r.row + 1).max().unwrap_or(0);
    let n_cols = rows.iter().map(|r| r.col + 1).max().unwrap_or(0);
    if rows.len() != n_rows * n_cols {
        return Err(IoError::Malformed(format!(
            "{} phase rows do not fill a {n_rows}x{n_cols} grid",
            rows.len()
        )));
    }
    let mut sites = vec![RingPhase::QUIESCENT; rows.len()];
    for r in rows {
        sites[r.row * n_cols + r.col] = RingPhase {
            k: r.k,
            theta: r.theta,
            converged: r.converged,
        };
    }
    Ok(PhaseField {
        rows: n_rows,
        cols: n_cols,
        snapshot_time,
        sites,
    })
}

/// Row-major grids of a phase field, for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub rows: usize,
    pub cols: usize,
    pub snapshot_time: f64,
    pub k: Vec<Vec<usize>>,
    /// `null` where the ring did not converge.
    pub theta: Vec<Vec<Option<f64>>>,
}

impl From<&PhaseField> for PhaseGrid {
    fn from(field: &PhaseField) -> Self {
        let rows_of = |f: &dyn Fn(&RingPhase) -> _| -> Vec<Vec<_>> {
            field
                .sites
                .chunks(field.cols.max(1))
                .map(|row| row.iter().map(f).collect())
                .collect()
        };
        Self {
            rows: field.rows,
            cols: field.cols,
            snapshot_time: field.snapshot_time,
            k: field
                .sites
                .chunks(field.cols.max(1))
                .map(|row| row.iter().map(|s| s.k).collect())
                .collect(),
            theta: rows_of(&|s: &RingPhase| s.converged.then_some(s.theta)),
        }
    }
}

pub fn write_correlation_csv<W: Write>(curve: &CorrelationCurve, out: W) -> Result<(), IoError> {
    write_rows(curve.entries.iter().copied(), out)
}

pub fn read_correlation_csv<R: Read>(input: R) -> Result<CorrelationCurve, IoError> {
    let entries: Vec<CorrelationEntry> = read_rows(input)?;
    Ok(CorrelationCurve { entries })
}

pub fn write_xi_csv<W: Write>(summaries: &[XiSummary], out: W) -> Result<(), IoError> {
    write_rows(summaries.iter().copied(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct EdgeRow {
    from: usize,
    to: usize,
}

pub fn write_edge_list<W: Write>(graph: &NetworkGraph, out: W) -> Result<(), IoError> {
    write_rows(graph.edges().map(|(from, to)| EdgeRow { from, to }), out)
}

pub fn read_edge_list<R: Read>(input: R) -> Result<Vec<(usize, usize)>, IoError> {
    let rows: Vec<EdgeRow> = read_rows(input)?;
    Ok(rows.into_iter().map(|r| (r.from, r.to)).collect())
}

/// Raw state file: voltages, outputs as a string of `0`/`1` digits, time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub t: f64,
    pub v: Vec<f64>,
    pub y: String,
}

impl From<&NetworkState> for StateFile {
    fn from(state: &NetworkState) -> Self {
        Self {
            t: state.t,
            v: state.v.clone(),
            y: state
                .y
                .iter()
                .map(|&b| if b == FIRING { '0' } else { '1' })
                .collect(),
        }
    }
}

impl TryFrom<StateFile> for NetworkState {
    type Error = IoError;

    fn try_from(file: StateFile) -> Result<Self, Self::Error> {
        let y = file
            .y
            .chars()
            .map(|c| match c {
                '0' => Ok(FIRING),
                '1' => Ok(DORMANT),
                other => Err(IoError::Malformed(format!("output digit `{other}`"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        if y.len() != file.v.len() {
            return Err(IoError::Malformed(format!(
                "{} outputs for {} voltages",
                y.len(),
                file.v.len()
            )));
        }
        Ok(NetworkState {
            v: file.v,
            y,
            t: file.t,
        })
    }
}

pub fn write_state_json<W: Write>(state: &NetworkState, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer(&mut out, &StateFile::from(state))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_state_json<R: Read>(input: R) -> Result<NetworkState, IoError> {
    let file: StateFile = serde_json::from_reader(input)?;
    NetworkState::try_from(file)
}
