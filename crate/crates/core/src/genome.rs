//! Flat genome layout.
//!
//! Unit networks: layer by layer, neuron by neuron, each unit's matrix
//! row-major. Plain tanh networks: layer by layer, the weight matrix
//! row-major followed by the bias vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{count_parameters, Architecture, DenseLayer, Matrix, NeuronMode};
use crate::neural_unit::NeuronParams;

/// Structured form of everything a genome encodes.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkParams {
    /// One entry per layer, one unit per neuron.
    Units(Vec<Vec<NeuronParams>>),
    Dense(Vec<DenseLayer>),
}

/// Binds a flat vector to the shape it was encoded from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layer_sizes: Vec<usize>,
    pub mode: NeuronMode,
}

impl Layout {
    pub fn of(arch: &Architecture) -> Self {
        Layout {
            layer_sizes: arch.layer_sizes.clone(),
            mode: arch.neuron_mode,
        }
    }

    pub fn len(&self) -> usize {
        count_parameters(&Architecture::new(self.layer_sizes.clone(), self.mode, 0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl Genome {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        let expected = layout.len();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                what: "genome",
                expected,
                actual: values.len(),
            });
        }
        Ok(Genome { values, layout })
    }

    pub fn decode(&self) -> Result<NetworkParams> {
        let arch = Architecture::new(self.layout.layer_sizes.clone(), self.layout.mode, 0);
        decode(&self.values, &arch)
    }
}

/// Flattens structured parameters. The layout is inferred from their shape.
pub fn encode(params: &NetworkParams) -> Result<Genome> {
    match params {
        NetworkParams::Units(layers) => {
            let kind = layers
                .iter()
                .flatten()
                .next()
                .map(NeuronParams::kind)
                .ok_or_else(|| Error::Config("cannot encode an empty network".into()))?;
            let mut values = Vec::new();
            for unit in layers.iter().flatten() {
                if unit.kind() != kind {
                    return Err(Error::Config("mixed unit kinds in one network".into()));
                }
                unit.write_to(&mut values);
            }
            let mode = match kind {
                crate::neural_unit::UnitKind::Recurrent => NeuronMode::Recurrent,
                crate::neural_unit::UnitKind::Simple => NeuronMode::Simple,
            };
            Genome::new(
                values,
                Layout {
                    layer_sizes: layers.iter().map(Vec::len).collect(),
                    mode,
                },
            )
        }
        NetworkParams::Dense(layers) => {
            let first = layers
                .first()
                .ok_or_else(|| Error::Config("cannot encode an empty network".into()))?;
            let mut sizes = vec![first.weights.cols];
            let mut values = Vec::new();
            for layer in layers {
                if layer.weights.cols != *sizes.last().unwrap() || layer.bias.len() != layer.weights.rows {
                    return Err(Error::Config("dense layer shapes do not chain".into()));
                }
                values.extend_from_slice(&layer.weights.data);
                values.extend_from_slice(&layer.bias);
                sizes.push(layer.weights.rows);
            }
            Genome::new(
                values,
                Layout {
                    layer_sizes: sizes,
                    mode: NeuronMode::PlainTanh,
                },
            )
        }
    }
}

/// Inverse of [`encode`] for the layout implied by `arch`.
pub fn decode(values: &[f64], arch: &Architecture) -> Result<NetworkParams> {
    let expected = count_parameters(arch);
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            what: "genome",
            expected,
            actual: values.len(),
        });
    }
    match arch.neuron_mode.unit_kind() {
        Some(kind) => {
            let mut chunks = values.chunks_exact(kind.param_len());
            let layers = arch
                .layer_sizes
                .iter()
                .map(|&n| {
                    (0..n)
                        .map(|_| NeuronParams::from_slice(kind, chunks.next().unwrap()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(NetworkParams::Units(layers))
        }
        None => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("genome"));
            }
            let mut offset = 0;
            let layers = arch
                .layer_sizes
                .windows(2)
                .map(|w| {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let weights = values[offset..offset + fan_in * fan_out].to_vec();
                    offset += fan_in * fan_out;
                    let bias = values[offset..offset + fan_out].to_vec();
                    offset += fan_out;
                    DenseLayer {
                        weights: Matrix { rows: fan_out, cols: fan_in, data: weights },
                        bias,
                    }
                })
                .collect();
            Ok(NetworkParams::Dense(layers))
        }
    }
}

/// How the search starts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenomeInit {
    #[default]
    Zeros,
    Normal { std: f64, seed: u64 },
}

pub fn initial_genome(arch: &Architecture, init: GenomeInit) -> Genome {
    let len = count_parameters(arch);
    let values = match init {
        GenomeInit::Zeros => vec![0.0; len],
        GenomeInit::Normal { std, seed } => {
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    Genome {
        values,
        layout: Layout::of(arch),
    }
}
