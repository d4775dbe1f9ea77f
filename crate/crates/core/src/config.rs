//! Declarative experiment configuration.
//!
//! A config file is TOML. It may name a `preset`; the file's own tables are
//! then merged over the preset key by key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::SwingUpParams;
use crate::error::{Error, Result};
use crate::genome::GenomeInit;
use crate::network::{Architecture, NeuronMode, DEFAULT_WEIGHT_STD};
use crate::optim::{OpenEsConfig, PipelineConfig, Strategy};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 4] = [
    "cartpole-recurrent",
    "cartpole-simple",
    "cartpole-small-ffnn",
    "cartpole-same-ffnn",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Parallel rollouts; results do not depend on this.
    pub workers: usize,
    /// Write an optimizer checkpoint every this many generations.
    pub checkpoint_every: usize,
    /// Held-out episodes scored for the champion after training.
    pub final_eval_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { workers: 1, checkpoint_every: 50, final_eval_episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub env: SwingUpParams,
    pub arch: Architecture,
    #[serde(default)]
    pub init: GenomeInit,
    #[serde(default)]
    pub optimizer: PipelineConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (sizes, mode, strategy) = match name {
            "cartpole-recurrent" => (vec![5, 128, 64, 1], NeuronMode::Recurrent, Strategy::GaCmaes),
            "cartpole-simple" => (vec![5, 128, 64, 1], NeuronMode::Simple, Strategy::GaCmaes),
            "cartpole-small-ffnn" => (vec![5, 32, 32, 1], NeuronMode::PlainTanh, Strategy::GaCmaes),
            "cartpole-same-ffnn" => (vec![5, 128, 64, 1], NeuronMode::PlainTanh, Strategy::OpenEs),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let optimizer = PipelineConfig {
            strategy,
            ga_generations: if strategy == Strategy::OpenEs { 0 } else { 100 },
            openes: OpenEsConfig::default(),
            ..Default::default()
        };
        Ok(ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            preset: Some(name.to_string()),
            env: SwingUpParams::default(),
            arch: Architecture {
                layer_sizes: sizes,
                neuron_mode: mode,
                output_kinds: Vec::new(),
                weight_seed: 0,
                weight_std: DEFAULT_WEIGHT_STD,
            },
            init: GenomeInit::Zeros,
            optimizer,
            run: RunConfig::default(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let merged = match value.get("preset") {
            None => value,
            Some(toml::Value::String(name)) => {
                let base = Self::preset(name)?;
                let mut base = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
                let explicit_ga = value
                    .get("optimizer")
                    .and_then(|o| o.get("ga_generations"))
                    .is_some();
                merge(&mut base, value);
                if !explicit_ga {
                    cap_preset_ga(&mut base);
                }
                base
            }
            Some(_) => return Err(Error::Config("preset must be a string".into())),
        };
        let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.env.validate()?;
        self.arch.validate()?;
        if self.arch.input_dim() != 5 || self.arch.output_dim() != 1 {
            return Err(Error::Config(format!(
                "arch.layer_sizes must start at 5 and end at 1 for the swing-up task, got {:?}",
                self.arch.layer_sizes
            )));
        }
        if let GenomeInit::Normal { std, .. } = self.init {
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::Config("init.std must be finite and > 0".into()));
            }
        }
        self.optimizer.validate()?;
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be >= 1".into()));
        }
        if self.run.checkpoint_every == 0 {
            return Err(Error::Config("run.checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }

    /// True when two configs drive the same computation. Worker count and
    /// checkpoint cadence do not affect results.
    pub fn same_experiment(&self, other: &Self) -> bool {
        self.env == other.env && self.arch == other.arch && self.init == other.init && self.optimizer == other.optimizer
    }
}

/// A preset's GA stage shrinks to fit a shorter run unless the file sets
/// `ga_generations` itself.
fn cap_preset_ga(cfg: &mut toml::Table) {
    let Some(toml::Value::Table(opt)) = cfg.get_mut("optimizer") else { return };
    if let (Some(toml::Value::Integer(ga)), Some(toml::Value::Integer(total))) =
        (opt.get("ga_generations"), opt.get("total_generations"))
    {
        let capped = (*ga).min(*total);
        opt.insert("ga_generations".into(), toml::Value::Integer(capped));
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
