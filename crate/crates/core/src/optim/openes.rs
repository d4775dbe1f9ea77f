//! Evolution strategy with mirrored Gaussian perturbations and centered-rank
//! fitness shaping, updating the center by plain gradient ascent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_fitness, ranking, AskTell, BestSoFar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenEsConfig {
    /// Must be even: candidates come in mirrored pairs.
    pub population_size: usize,
    pub sigma: f64,
    pub learning_rate: f64,
}

impl Default for OpenEsConfig {
    fn default() -> Self {
        OpenEsConfig {
            population_size: 128,
            sigma: 0.1,
            learning_rate: 0.01,
        }
    }
}

impl OpenEsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "openes.population_size must be even and >= 2, got {}",
                self.population_size
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config("openes.sigma must be finite and > 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("openes.learning_rate must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Maps fitness to centered ranks in [-0.5, 0.5]. Tied values share their
/// average rank, so a population of equal fitnesses shapes to all zeros.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n < 2 {
        return vec![0.0; n];
    }
    // ascending order: worst gets rank 0
    let mut order = ranking(fitness);
    order.reverse();
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && fitness[order[end]] == fitness[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks.iter().map(|r| r / (n - 1) as f64 - 0.5).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenEs {
    cfg: OpenEsConfig,
    center: Vec<f64>,
    rng: ChaCha8Rng,
    /// One noise vector per mirrored pair of the outstanding population.
    pending: Option<Vec<Vec<f64>>>,
    best: BestSoFar,
    generation: usize,
}

impl OpenEs {
    pub fn new(cfg: OpenEsConfig, center: &[f64], seed: u64) -> Result<Self> {
        cfg.validate()?;
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("openes initial center"));
        }
        Ok(OpenEs {
            cfg,
            center: center.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            best: BestSoFar::default(),
            generation: 0,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl AskTell for OpenEs {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn population_size(&self) -> usize {
        self.cfg.population_size
    }

    fn generation(&self) -> usize {
        self.generation
    }

    /// Candidates `2k` and `2k + 1` are `θ + σε_k` and `θ − σε_k`.
    fn ask(&mut self) -> Vec<Vec<f64>> {
        if self.pending.is_none() {
            let dim = self.center.len();
            let noise = (0..self.cfg.population_size / 2)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut self.rng)).collect())
                .collect();
            self.pending = Some(noise);
        }
        let sigma = self.cfg.sigma;
        let mut out = Vec::with_capacity(self.cfg.population_size);
        for eps in self.pending.as_ref().unwrap() {
            out.push(self.center.iter().zip(eps).map(|(c, e)| c + sigma * e).collect());
            out.push(self.center.iter().zip(eps).map(|(c, e)| c - sigma * e).collect());
        }
        out
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<()> {
        check_fitness(fitness, self.cfg.population_size)?;
        let Some(noise) = self.pending.take() else {
            return Err(Error::Protocol("openes tell without a preceding ask".into()));
        };
        let sigma = self.cfg.sigma;
        let best_idx = ranking(fitness)[0];
        let (pair, sign) = (best_idx / 2, if best_idx.is_multiple_of(2) { 1.0 } else { -1.0 });
        let best: Vec<f64> = self
            .center
            .iter()
            .zip(&noise[pair])
            .map(|(c, e)| c + sign * sigma * e)
            .collect();
        self.best.offer(&best, fitness[best_idx]);

        let shaped = centered_ranks(fitness);
        let mut grad = vec![0.0; self.center.len()];
        for (k, eps) in noise.iter().enumerate() {
            let diff = shaped[2 * k] - shaped[2 * k + 1];
            if diff != 0.0 {
                grad.iter_mut().zip(eps).for_each(|(g, e)| *g += diff * e);
            }
        }
        let step = self.cfg.learning_rate / (self.cfg.population_size as f64 * sigma);
        self.center.iter_mut().zip(&grad).for_each(|(c, g)| *c += step * g);
        self.generation += 1;
        Ok(())
    }

    fn current_solution(&self) -> Vec<f64> {
        self.center.clone()
    }

    fn best(&self) -> Option<(&[f64], f64)> {
        self.best.get()
    }
}
