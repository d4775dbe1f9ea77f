//! On-disk formats: the champion file (JSON) and optimizer checkpoints
//! (a short header followed by bincode).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::env::SwingUpParams;
use crate::error::{Error, Result};
use crate::harness::EvalReport;
use crate::network::{count_parameters, draw_weights, weight_checksum, Architecture, NeuronMode};
use crate::optim::Pipeline;

pub const CHAMPION_FORMAT: &str = "neurodiv-champion";
pub const CHAMPION_VERSION: u32 = 1;
const STATE_MAGIC: &[u8; 8] = b"NDIVSTA\0";
const STATE_VERSION: u32 = 1;

/// Score of the champion during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingScore {
    pub generation: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Champion {
    pub format: String,
    pub version: u32,
    pub arch: Architecture,
    pub env: SwingUpParams,
    pub genome: Vec<f64>,
    /// Checksum of the frozen weights; absent for weight-trained networks.
    pub weight_checksum: Option<String>,
    pub training: Option<TrainingScore>,
    pub held_out: Option<EvalReport>,
}

fn frozen_checksum(arch: &Architecture) -> Option<String> {
    (arch.neuron_mode != NeuronMode::PlainTanh).then(|| weight_checksum(&draw_weights(arch)))
}

impl Champion {
    pub fn new(arch: Architecture, env: SwingUpParams, genome: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        Ok(Champion {
            format: CHAMPION_FORMAT.into(),
            version: CHAMPION_VERSION,
            weight_checksum: frozen_checksum(&arch),
            arch,
            env,
            genome,
            training: None,
            held_out: None,
        })
    }

    /// Checks format, genome length and that the frozen weights regenerate
    /// to the recorded checksum.
    pub fn verify(&self) -> Result<()> {
        if self.format != CHAMPION_FORMAT || self.version != CHAMPION_VERSION {
            return Err(Error::Protocol(format!(
                "not a champion file (format {:?} version {})",
                self.format, self.version
            )));
        }
        self.arch.validate()?;
        self.env.validate()?;
        let expected = count_parameters(&self.arch);
        if self.genome.len() != expected {
            return Err(Error::LengthMismatch { what: "champion genome", expected, actual: self.genome.len() });
        }
        if self.genome.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("champion genome"));
        }
        let found = frozen_checksum(&self.arch);
        if found != self.weight_checksum {
            return Err(Error::WeightChecksum {
                recorded: self.weight_checksum.clone().unwrap_or_default(),
                found: found.unwrap_or_default(),
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let champion: Champion = serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        champion.verify()?;
        Ok(champion)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingState {
    /// The resolved config, as TOML text.
    pub config: String,
    pub weight_checksum: Option<String>,
    pub pipeline: Pipeline,
}

impl TrainingState {
    pub fn new(config: &ExperimentConfig, pipeline: Pipeline) -> Result<Self> {
        Ok(TrainingState {
            config: config.to_toml_string()?,
            weight_checksum: frozen_checksum(&config.arch),
            pipeline,
        })
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(&self.config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(STATE_MAGIC);
        bytes.extend_from_slice(&STATE_VERSION.to_le_bytes());
        bincode::serialize_into(&mut bytes, self).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint { path: path.to_path_buf(), reason };
        let bytes = std::fs::read(path)?;
        if bytes.len() < 12 || &bytes[..8] != STATE_MAGIC {
            return Err(bad("not an optimizer checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != STATE_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let state: TrainingState = bincode::deserialize(&bytes[12..]).map_err(|e| bad(e.to_string()))?;
        let config = state.config().map_err(|e| bad(format!("embedded config: {e}")))?;
        let found = frozen_checksum(&config.arch);
        if found != state.weight_checksum {
            return Err(Error::WeightChecksum {
                recorded: state.weight_checksum.clone().unwrap_or_default(),
                found: found.unwrap_or_default(),
            });
        }
        Ok(state)
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("out"));
    tmp.set_file_name(name);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
