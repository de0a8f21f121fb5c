//! Integrity-checked checkpoints of lattice runs.

use std::path::Path;

use ringosc::EngineSnapshot;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::output::write_atomic;

const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config_hash: String,
    /// The only randomness in a run is the seeded initial state.
    pub seed: u64,
    pub engine: EngineSnapshot,
    /// Length of the event log when the checkpoint was taken.
    pub events_bytes: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    sha256: String,
    checkpoint: Checkpoint,
}

fn digest(c: &Checkpoint) -> String {
    let bytes = serde_json::to_vec(c).expect("checkpoint serializes");
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn new(
        config_hash: String,
        seed: u64,
        engine: EngineSnapshot,
        events_bytes: Option<u64>,
    ) -> Self {
        Self {
            format: FORMAT,
            config_hash,
            seed,
            engine,
            events_bytes,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let envelope = Envelope {
            sha256: digest(self),
            checkpoint: self.clone(),
        };
        write_atomic(path, |w| {
            serde_json::to_writer(w, &envelope).map_err(|e| CliError::io(path.display(), e))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
        let corrupt =
            |why: String| CliError::Io(format!("{}: corrupt checkpoint: {why}", path.display()));
        let envelope: Envelope =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if digest(&envelope.checkpoint) != envelope.sha256 {
            return Err(corrupt("checksum mismatch".into()));
        }
        if envelope.checkpoint.format != FORMAT {
            return Err(corrupt(format!(
                "unsupported format {}",
                envelope.checkpoint.format
            )));
        }
        Ok(envelope.checkpoint)
    }

    /// Refuses a checkpoint written under a different configuration.
    pub fn check_config(&self, hash: &str, path: &Path) -> Result<(), CliError> {
        if self.config_hash != hash {
            return Err(CliError::Config(format!(
                "{}: checkpoint was written with config {} but the current config hashes to {hash}",
                path.display(),
                self.config_hash
            )));
        }
        Ok(())
    }
}
