//! Event-driven simulation of differentiating-neuron networks: single ring
//! oscillators, lattices of coupled rings, numerical phase reduction and
//! phase-correlation measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod engine;
pub mod io;
pub mod lattice;
pub mod network;
pub mod phase;
pub mod ring;

pub use engine::{Engine, EngineError, EngineLimits, EngineSnapshot, EventRecord, StepOutcome};
pub use network::{NetworkError, NetworkGraph, NetworkState, SchmittConfig, TransitionKind};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
