//! Truncation-selection genetic algorithm with Gaussian mutation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_fitness, ranking, AskTell, BestSoFar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    /// Fraction of each generation copied unchanged into the next.
    pub elite_fraction: f64,
    pub mutation_std: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 512,
            elite_fraction: 0.125,
            mutation_std: 1.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("ga.population_size must be >= 2".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config("ga.elite_fraction must be in (0, 1]".into()));
        }
        if !(self.mutation_std.is_finite() && self.mutation_std > 0.0) {
            return Err(Error::Config("ga.mutation_std must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population_size as f64 * self.elite_fraction).round() as usize).clamp(1, self.population_size)
    }
}

/// Each generation keeps the top `elite_count` candidates unchanged and
/// fills the rest with copies of uniformly chosen elites plus N(0, σ²)
/// noise on every coordinate. No crossover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ga {
    cfg: GaConfig,
    population: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    best: BestSoFar,
    generation: usize,
}

impl Ga {
    /// The first population is `initial` itself plus mutated copies of it.
    pub fn new(cfg: GaConfig, initial: &[f64], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.mutation_std).unwrap();
        let mut population = Vec::with_capacity(cfg.population_size);
        population.push(initial.to_vec());
        while population.len() < cfg.population_size {
            population.push(initial.iter().map(|v| v + normal.sample(&mut rng)).collect());
        }
        Ok(Ga {
            cfg,
            population,
            rng,
            best: BestSoFar::default(),
            generation: 0,
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.cfg
    }

    pub fn population(&self) -> &[Vec<f64>] {
        &self.population
    }
}

impl AskTell for Ga {
    fn dim(&self) -> usize {
        self.population[0].len()
    }

    fn population_size(&self) -> usize {
        self.cfg.population_size
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn ask(&mut self) -> Vec<Vec<f64>> {
        self.population.clone()
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<()> {
        check_fitness(fitness, self.cfg.population_size)?;
        let order = ranking(fitness);
        self.best.offer(&self.population[order[0]], fitness[order[0]]);

        let n_elite = self.cfg.elite_count();
        let elites: Vec<Vec<f64>> = order[..n_elite]
            .iter()
            .map(|&i| std::mem::take(&mut self.population[i]))
            .collect();
        let normal = Normal::new(0.0, self.cfg.mutation_std).unwrap();
        let mut next = elites.clone();
        while next.len() < self.cfg.population_size {
            let parent = &elites[self.rng.random_range(0..n_elite)];
            next.push(parent.iter().map(|v| v + normal.sample(&mut self.rng)).collect());
        }
        self.population = next;
        self.generation += 1;
        Ok(())
    }

    fn current_solution(&self) -> Vec<f64> {
        match self.best.get() {
            Some((g, _)) => g.to_vec(),
            None => self.population[0].clone(),
        }
    }

    fn best(&self) -> Option<(&[f64], f64)> {
        self.best.get()
    }
}
