//! Derivative-free optimizers behind a common ask/tell protocol.
//!
//! Fitness is always maximized.

pub mod cmaes;
pub mod ga;
pub mod openes;
pub mod pipeline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cmaes::{Cmaes, CmaesConfig, StrategyParams};
pub use ga::{Ga, GaConfig};
pub use openes::{OpenEs, OpenEsConfig};
pub use pipeline::{run_pipeline, FitnessFn, Champion, HistoryRow, Pipeline, PipelineConfig, PipelineOutcome, Stage, Strategy, Workers};

pub trait AskTell {
    fn dim(&self) -> usize;
    fn population_size(&self) -> usize;
    /// Number of completed `tell` calls.
    fn generation(&self) -> usize;
    /// Candidates for the current generation. Repeated calls before `tell`
    /// return the same population.
    fn ask(&mut self) -> Vec<Vec<f64>>;
    /// Fitnesses for the last `ask`, in candidate order.
    fn tell(&mut self, fitness: &[f64]) -> Result<()>;
    /// The solution the optimizer currently stands behind.
    fn current_solution(&self) -> Vec<f64>;
    /// Best candidate seen so far and its fitness.
    fn best(&self) -> Option<(&[f64], f64)>;
}

pub(crate) fn check_fitness(fitness: &[f64], expected: usize) -> Result<()> {
    if fitness.len() != expected {
        return Err(Error::Protocol(format!(
            "tell expected {expected} fitness values, got {}",
            fitness.len()
        )));
    }
    if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(Error::Protocol(format!(
            "fitness of candidate {i} is {}",
            fitness[i]
        )));
    }
    Ok(())
}

/// Candidate indices sorted from best to worst; ties keep candidate order.
pub(crate) fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    idx
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Keeps the best `(genome, fitness)` pair seen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub genome: Vec<f64>,
    pub fitness: Option<f64>,
}

impl BestSoFar {
    pub fn offer(&mut self, genome: &[f64], fitness: f64) {
        if self.fitness.is_none_or(|f| fitness > f) {
            self.genome = genome.to_vec();
            self.fitness = Some(fitness);
        }
    }

    pub fn get(&self) -> Option<(&[f64], f64)> {
        self.fitness.map(|f| (self.genome.as_slice(), f))
    }
}
