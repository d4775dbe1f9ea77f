//! Feedforward networks with frozen random weights and per-neuron units,
//! and the weight-trainable tanh network used as a baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::genome::{self, NetworkParams};
use crate::neural_unit::{recurrent_unchecked, simple_unchecked, squash, NeuronParams, OutputKind, UnitKind};

pub const DEFAULT_WEIGHT_STD: f64 = 0.5;

fn default_weight_std() -> f64 {
    DEFAULT_WEIGHT_STD
}

/// What gets optimized: per-neuron units over frozen weights, or the
/// weights and biases of a plain tanh network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronMode {
    Recurrent,
    Simple,
    PlainTanh,
}

impl NeuronMode {
    pub fn unit_kind(self) -> Option<UnitKind> {
        match self {
            NeuronMode::Recurrent => Some(UnitKind::Recurrent),
            NeuronMode::Simple => Some(UnitKind::Simple),
            NeuronMode::PlainTanh => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub neuron_mode: NeuronMode,
    /// One entry per output neuron. Empty means tanh everywhere.
    #[serde(default)]
    pub output_kinds: Vec<OutputKind>,
    #[serde(default)]
    pub weight_seed: u64,
    /// Standard deviation of the frozen weights.
    #[serde(default = "default_weight_std")]
    pub weight_std: f64,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>, neuron_mode: NeuronMode, weight_seed: u64) -> Self {
        Architecture {
            layer_sizes,
            neuron_mode,
            output_kinds: Vec::new(),
            weight_seed,
            weight_std: DEFAULT_WEIGHT_STD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "arch.layer_sizes needs at least 2 layers, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("arch.layer_sizes entries must be >= 1".into()));
        }
        if !self.output_kinds.is_empty() && self.output_kinds.len() != self.output_dim() {
            return Err(Error::Config(format!(
                "arch.output_kinds has {} entries for {} output neurons",
                self.output_kinds.len(),
                self.output_dim()
            )));
        }
        if !(self.weight_std.is_finite() && self.weight_std > 0.0) {
            return Err(Error::Config("arch.weight_std must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn num_neurons(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn output_kind(&self, i: usize) -> OutputKind {
        self.output_kinds.get(i).copied().unwrap_or_default()
    }

    /// Output kind for neuron `i` of layer `layer`; tanh outside the output layer.
    pub fn kind_at(&self, layer: usize, i: usize) -> OutputKind {
        if layer + 1 == self.num_layers() {
            self.output_kind(i)
        } else {
            OutputKind::Tanh
        }
    }
}

/// Number of evolvable values for `arch`.
pub fn count_parameters(arch: &Architecture) -> usize {
    match arch.neuron_mode.unit_kind() {
        Some(kind) => kind.param_len() * arch.num_neurons(),
        None => arch
            .layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum(),
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out = self · x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        out.extend((0..self.rows).map(|r| dot(self.row(r), x)));
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws the frozen weight matrices for `arch`.
///
/// Matrix `k` maps layer `k` to layer `k + 1` and has shape
/// `layer_sizes[k+1] × layer_sizes[k]`. Each matrix comes from its own ChaCha
/// stream keyed by `(weight_seed, k)` and is filled row-major, so the values
/// of one layer never depend on the shape of another.
pub fn draw_weights(arch: &Architecture) -> Vec<Matrix> {
    let normal = Normal::new(0.0, arch.weight_std).expect("weight_std validated");
    arch.layer_sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(arch.weight_seed);
            rng.set_stream(k as u64);
            let data = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
            Matrix { rows: w[1], cols: w[0], data }
        })
        .collect()
}

/// SHA-256 over the shapes and bit patterns of all weight matrices, hex encoded.
pub fn weight_checksum(weights: &[Matrix]) -> String {
    let mut hasher = Sha256::new();
    for m in weights {
        hasher.update((m.rows as u64).to_le_bytes());
        hasher.update((m.cols as u64).to_le_bytes());
        for v in &m.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Anything that maps observations to actions and may carry state between steps.
pub trait Policy {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>>;
    /// Clears any internal state. Stateless policies do nothing.
    fn reset(&mut self) {}
}

fn check_obs(obs: &[f64], expected: usize) -> Result<()> {
    if obs.len() != expected {
        return Err(Error::LengthMismatch {
            what: "observation",
            expected,
            actual: obs.len(),
        });
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}

/// A network whose weights are frozen at construction and whose neurons are
/// parameterized units.
#[derive(Debug, Clone)]
pub struct RandomNetwork {
    arch: Architecture,
    weights: Vec<Matrix>,
    units: Vec<Vec<NeuronParams>>,
    states: Vec<Vec<f64>>,
    checksum: String,
    scratch: Vec<f64>,
}

impl RandomNetwork {
    /// Builds the network from a flat genome laid out per [`crate::genome`].
    pub fn build(arch: &Architecture, neuron_params: &[f64]) -> Result<Self> {
        arch.validate()?;
        if arch.neuron_mode == NeuronMode::PlainTanh {
            return Err(Error::Config(
                "neuron_mode plain_tanh has no neural units; use FfnnPolicy".into(),
            ));
        }
        let units = match genome::decode(neuron_params, arch)? {
            NetworkParams::Units(u) => u,
            NetworkParams::Dense(_) => unreachable!("unit mode decodes to units"),
        };
        let weights = draw_weights(arch);
        let checksum = weight_checksum(&weights);
        let states = arch.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Ok(RandomNetwork {
            arch: arch.clone(),
            weights,
            units,
            states,
            checksum,
            scratch: Vec::new(),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn units(&self) -> &[Vec<NeuronParams>] {
        &self.units
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// Checksum recorded when the weights were drawn.
    pub fn recorded_checksum(&self) -> &str {
        &self.checksum
    }

    /// Recomputes the checksum and compares it with the one recorded at build.
    pub fn verify_weights(&self) -> Result<()> {
        let found = weight_checksum(&self.weights);
        if found != self.checksum {
            return Err(Error::WeightChecksum {
                recorded: self.checksum.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn reset_states(&mut self) {
        for layer in &mut self.states {
            layer.iter_mut().for_each(|h| *h = 0.0);
        }
    }

    /// Advances every unit by one time step and returns the output layer.
    pub fn forward(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        check_obs(obs, self.arch.input_dim())?;
        let last = self.arch.num_layers() - 1;
        let mut current: Vec<f64> = obs.to_vec();
        let mut next = std::mem::take(&mut self.scratch);
        for layer in 0..=last {
            if layer > 0 {
                self.weights[layer - 1].mul_vec_into(&current, &mut next);
                std::mem::swap(&mut current, &mut next);
            }
            let units = &self.units[layer];
            let states = &mut self.states[layer];
            for (i, x) in current.iter_mut().enumerate() {
                let kind = if layer == last { self.arch.output_kind(i) } else { OutputKind::Tanh };
                *x = match &units[i] {
                    NeuronParams::Recurrent(m) => {
                        let h_prev = states[i];
                        let (out, h) = recurrent_unchecked(m, *x, h_prev);
                        states[i] = h;
                        if kind == OutputKind::Tanh {
                            out
                        } else {
                            squash(m[0][0] * *x + m[0][1] * h_prev + m[0][2], kind)
                        }
                    }
                    NeuronParams::Simple(p) if kind == OutputKind::Tanh => simple_unchecked(p, *x),
                    NeuronParams::Simple(p) => squash(p[0] * *x + p[1], kind),
                };
            }
        }
        self.scratch = next;
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(current)
    }
}

impl Policy for RandomNetwork {
    fn obs_dim(&self) -> usize {
        self.arch.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.arch.output_dim()
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        self.forward(obs)
    }

    fn reset(&mut self) {
        self.reset_states();
    }
}

/// One trainable fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Plain tanh feedforward network whose weights and biases are the genome.
#[derive(Debug, Clone)]
pub struct FfnnPolicy {
    arch: Architecture,
    layers: Vec<DenseLayer>,
}

impl FfnnPolicy {
    pub fn build(arch: &Architecture, params: &[f64]) -> Result<Self> {
        arch.validate()?;
        if arch.neuron_mode != NeuronMode::PlainTanh {
            return Err(Error::Config(
                "FfnnPolicy requires neuron_mode plain_tanh".into(),
            ));
        }
        let layers = match genome::decode(params, arch)? {
            NetworkParams::Dense(l) => l,
            NetworkParams::Units(_) => unreachable!("plain_tanh decodes to dense layers"),
        };
        Ok(FfnnPolicy { arch: arch.clone(), layers })
    }

    pub fn from_layers(arch: &Architecture, layers: Vec<DenseLayer>) -> Result<Self> {
        let flat = genome::encode(&NetworkParams::Dense(layers))?;
        Self::build(arch, &flat.values)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        check_obs(obs, self.arch.input_dim())?;
        let last = self.layers.len() - 1;
        let mut x = obs.to_vec();
        let mut buf = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.weights.mul_vec_into(&x, &mut buf);
            for (i, v) in buf.iter_mut().enumerate() {
                let kind = if k == last { self.arch.output_kind(i) } else { OutputKind::Tanh };
                *v = squash(*v + layer.bias[i], kind);
            }
            std::mem::swap(&mut x, &mut buf);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(x)
    }
}

impl Policy for FfnnPolicy {
    fn obs_dim(&self) -> usize {
        self.arch.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.arch.output_dim()
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        self.forward(obs)
    }
}

/// Builds whichever policy `arch.neuron_mode` calls for.
pub fn build_policy(arch: &Architecture, genome: &[f64]) -> Result<Box<dyn Policy + Send>> {
    Ok(match arch.neuron_mode {
        NeuronMode::PlainTanh => Box::new(FfnnPolicy::build(arch, genome)?),
        _ => Box::new(RandomNetwork::build(arch, genome)?),
    })
}
