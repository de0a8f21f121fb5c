use ringosc::engine::EngineError;
use ringosc::lattice::{sites_of_neuron, LatticeGraph};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Engine(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }

    /// Engine failure with the seed and, on lattices, the rings that own the
    /// offending neuron.
    pub fn engine(err: EngineError, seed: u64, lattice: Option<&LatticeGraph>) -> Self {
        let neuron = match &err {
            EngineError::OddCycleOscillation { neuron, .. }
            | EngineError::FiringPrecondition { neuron, .. } => Some(*neuron),
            _ => None,
        };
        let sites = match (neuron, lattice) {
            (Some(n), Some(l)) => {
                let coords: Vec<String> = sites_of_neuron(l, n)
                    .into_iter()
                    .map(|s| {
                        let (r, c) = l.site_coords(s);
                        format!("({r}, {c})")
                    })
                    .collect();
                format!(" [ring sites {}]", coords.join(", "))
            }
            _ => String::new(),
        };
        CliError::Engine(format!("seed {seed}: {err}{sites}"))
    }
}

impl From<ringosc::io::IoError> for CliError {
    fn from(e: ringosc::io::IoError) -> Self {
        CliError::Io(e.to_string())
    }
}
