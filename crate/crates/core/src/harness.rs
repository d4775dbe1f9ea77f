//! Evaluation protocol and activation probes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{run_episode, CartPoleSwingUp, SwingUpParams};
use crate::error::{Error, Result};
use crate::genome::{self, NetworkParams};
use crate::network::{build_policy, Architecture};
use crate::neural_unit::{NeuronParams, UnitKind};
use crate::optim::pipeline::Workers;
use crate::optim::{mean_std, FitnessFn};
use crate::seeds;

pub const PROBE_POINTS: usize = 1000;
pub const PROBE_LO: f64 = -3.0;
pub const PROBE_HI: f64 = 3.0;

/// Scores of one genome over a block of consecutive episode seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub genome_id: String,
    pub n_episodes: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn from_scores(genome_id: String, base_seed: u64, scores: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&scores);
        let seeds = (0..scores.len() as u64).map(|i| base_seed.wrapping_add(i)).collect();
        EvalReport { genome_id, n_episodes: scores.len(), base_seed, seeds, scores, mean, std }
    }
}

/// Short content hash identifying a genome.
pub fn genome_id(genome: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in genome {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn episode_score(arch: &Architecture, genome: &[f64], env: &SwingUpParams, seed: u64) -> Result<f64> {
    let mut policy = build_policy(arch, genome)?;
    let mut env = CartPoleSwingUp::new(env.clone())?;
    Ok(run_episode(policy.as_mut(), &mut env, seed)?.total_reward)
}

/// Scores for seeds `base_seed .. base_seed + n_episodes`, in seed order.
pub fn episode_scores(
    arch: &Architecture,
    genome: &[f64],
    env: &SwingUpParams,
    n_episodes: usize,
    base_seed: u64,
    workers: &Workers,
) -> Result<Vec<f64>> {
    let seeds: Vec<u64> = (0..n_episodes as u64).map(|i| base_seed.wrapping_add(i)).collect();
    workers
        .map(&seeds, |_, &s| episode_score(arch, genome, env, s))
        .into_iter()
        .collect()
}

/// Runs `n_episodes` rollouts with fresh network state and reports the scores.
pub fn evaluate(
    arch: &Architecture,
    genome: &[f64],
    env: &SwingUpParams,
    n_episodes: usize,
    base_seed: u64,
    workers: &Workers,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be >= 1".into()));
    }
    let scores = episode_scores(arch, genome, env, n_episodes, base_seed, workers)?;
    Ok(EvalReport::from_scores(genome_id(genome), base_seed, scores))
}

/// Training objective on the swing-up task.
///
/// A candidate's fitness is its mean return over `episodes_per_candidate`
/// episodes whose seeds depend on the generation only, so all candidates of
/// one generation face the same starts.
#[derive(Debug, Clone)]
pub struct CartPoleFitness {
    pub arch: Architecture,
    pub env: SwingUpParams,
    pub episodes_per_candidate: usize,
    pub master_seed: u64,
}

impl FitnessFn for CartPoleFitness {
    fn fitness(&self, genome: &[f64], generation: usize) -> Result<f64> {
        let mut total = 0.0;
        for ep in 0..self.episodes_per_candidate {
            let seed = seeds::training_episode(self.master_seed, generation, ep);
            total += episode_score(&self.arch, genome, &self.env, seed)?;
        }
        Ok(total / self.episodes_per_candidate as f64)
    }

    fn periodic_scores(&self, genome: &[f64], _generation: usize, episodes: usize) -> Result<Vec<f64>> {
        (0..episodes)
            .map(|ep| episode_score(&self.arch, genome, &self.env, seeds::periodic_eval_episode(ep)))
            .collect()
    }
}

/// Response of one neuron to an ordered input sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub layer: usize,
    pub neuron: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    /// Absent for simple units, which carry no state.
    pub states: Option<Vec<f64>>,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

fn layer_units(arch: &Architecture, genome: &[f64], layer: usize) -> Result<Vec<NeuronParams>> {
    if layer >= arch.num_layers() {
        return Err(Error::InvalidLayer { layer, layers: arch.num_layers() });
    }
    match genome::decode(genome, arch)? {
        NetworkParams::Units(mut units) => Ok(units.swap_remove(layer)),
        NetworkParams::Dense(_) => Err(Error::Config("plain_tanh networks have no neural units to probe".into())),
    }
}

/// Feeds `inputs` in order to one unit starting from zero state.
pub fn probe_unit(
    unit: &NeuronParams,
    kind: crate::neural_unit::OutputKind,
    inputs: &[f64],
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut states = Vec::with_capacity(inputs.len());
    let mut h = 0.0;
    for &x in inputs {
        let (out, h_new) = unit.step(x, h, kind)?;
        outputs.push(out);
        states.push(h_new);
        h = h_new;
    }
    let states = (unit.kind() == UnitKind::Recurrent).then_some(states);
    Ok((outputs, states))
}

/// Probes every neuron of `layer` (0 is the input layer) with the given
/// inputs, each neuron in isolation and bypassing the frozen weights.
pub fn probe_activations_with(
    arch: &Architecture,
    genome: &[f64],
    layer: usize,
    inputs: &[f64],
) -> Result<Vec<ActivationTrace>> {
    let units = layer_units(arch, genome, layer)?;
    units
        .iter()
        .enumerate()
        .map(|(neuron, unit)| {
            let (outputs, states) = probe_unit(unit, arch.kind_at(layer, neuron), inputs)?;
            Ok(ActivationTrace { layer, neuron, inputs: inputs.to_vec(), outputs, states })
        })
        .collect()
}

/// The standard probe: 1000 ascending inputs over [-3, 3].
pub fn probe_activations(arch: &Architecture, genome: &[f64], layer: usize) -> Result<Vec<ActivationTrace>> {
    probe_activations_with(arch, genome, layer, &linspace(PROBE_LO, PROBE_HI, PROBE_POINTS))
}

/// Ascending versus descending sweep, compared at equal input values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub layer: usize,
    /// Largest pointwise output difference per neuron.
    pub divergence: Vec<f64>,
    pub max_divergence: f64,
    pub argmax: usize,
}

pub fn compare_orderings(arch: &Architecture, genome: &[f64], layer: usize) -> Result<OrderingReport> {
    let up = linspace(PROBE_LO, PROBE_HI, PROBE_POINTS);
    let down: Vec<f64> = up.iter().rev().copied().collect();
    let asc = probe_activations_with(arch, genome, layer, &up)?;
    let desc = probe_activations_with(arch, genome, layer, &down)?;
    let divergence: Vec<f64> = asc
        .iter()
        .zip(&desc)
        .map(|(a, d)| {
            a.outputs
                .iter()
                .zip(d.outputs.iter().rev())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let (argmax, max_divergence) = divergence
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Ok(OrderingReport { layer, divergence, max_divergence, argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Flat,
    Increasing,
    Decreasing,
    NonMonotone,
}

/// Classifies a trace, ignoring steps no larger than `tol`.
pub fn shape(values: &[f64], tol: f64) -> Shape {
    let mut up = false;
    let mut down = false;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        up |= d > tol;
        down |= d < -tol;
    }
    match (up, down) {
        (false, false) => Shape::Flat,
        (true, false) => Shape::Increasing,
        (false, true) => Shape::Decreasing,
        (true, true) => Shape::NonMonotone,
    }
}

/// One row per input; per neuron an `n<i>_out` column and, for recurrent
/// units, an `n<i>_state` column.
pub fn write_traces<W: Write>(out: W, traces: &[ActivationTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["input".to_string()];
    for t in traces {
        header.push(format!("n{}_out", t.neuron));
        if t.states.is_some() {
            header.push(format!("n{}_state", t.neuron));
        }
    }
    w.write_record(&header)?;
    let rows = traces.first().map_or(0, |t| t.inputs.len());
    let mut record = Vec::with_capacity(header.len());
    for r in 0..rows {
        record.clear();
        record.push(traces[0].inputs[r].to_string());
        for t in traces {
            record.push(t.outputs[r].to_string());
            if let Some(s) = &t.states {
                record.push(s[r].to_string());
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces_csv(path: &Path, traces: &[ActivationTrace]) -> Result<()> {
    write_traces(std::fs::File::create(path)?, traces)
}
