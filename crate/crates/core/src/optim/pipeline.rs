//! Staged search: a wide GA for the first generations, then CMA-ES started
//! from the GA's best genome. The weight-trained baseline runs OpenES alone.
//!
//! A [`Pipeline`] advances one generation per [`Pipeline::step`] and can be
//! serialized between steps, so an interrupted run resumes exactly where it
//! stopped.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, AskTell, Cmaes, CmaesConfig, Ga, GaConfig, OpenEs, OpenEsConfig};
use crate::error::{Error, Result};
use crate::seeds::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GaCmaes,
    OpenEs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ga,
    Cmaes,
    OpenEs,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ga => "ga",
            Stage::Cmaes => "cmaes",
            Stage::OpenEs => "openes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    /// GA generations before the CMA-ES handoff.
    pub ga_generations: usize,
    pub total_generations: usize,
    pub ga: GaConfig,
    pub cmaes: CmaesConfig,
    pub openes: OpenEsConfig,
    /// Episodes averaged into each candidate's training fitness.
    pub episodes_per_candidate: usize,
    /// Re-evaluate the current solution every this many generations.
    pub eval_period: usize,
    pub eval_episodes: usize,
    /// Also evaluate after the last generation.
    pub eval_final: bool,
    /// L2 penalty on candidates, subtracted from their fitness.
    pub weight_decay: f64,
    pub seed: u64,
    pub record_wallclock: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            strategy: Strategy::GaCmaes,
            ga_generations: 100,
            total_generations: 4000,
            ga: GaConfig::default(),
            cmaes: CmaesConfig {
                population_size: Some(128),
                initial_sigma: 0.5,
            },
            openes: OpenEsConfig::default(),
            episodes_per_candidate: 1,
            eval_period: 50,
            eval_episodes: 64,
            eval_final: true,
            weight_decay: 0.0,
            seed: 0,
            record_wallclock: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_generations == 0 {
            return Err(Error::Config("optimizer.total_generations must be >= 1".into()));
        }
        if self.strategy == Strategy::GaCmaes {
            if self.ga_generations > self.total_generations {
                return Err(Error::Config(format!(
                    "optimizer.ga_generations ({}) exceeds optimizer.total_generations ({})",
                    self.ga_generations, self.total_generations
                )));
            }
            self.ga.validate()?;
            self.cmaes.validate()?;
        } else {
            self.openes.validate()?;
        }
        if self.eval_period == 0 {
            return Err(Error::Config("optimizer.eval_period must be >= 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("optimizer.eval_episodes must be >= 1".into()));
        }
        if self.episodes_per_candidate == 0 {
            return Err(Error::Config("optimizer.episodes_per_candidate must be >= 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("optimizer.weight_decay must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn stage_at(&self, generation: usize) -> Stage {
        match self.strategy {
            Strategy::OpenEs => Stage::OpenEs,
            Strategy::GaCmaes if generation < self.ga_generations => Stage::Ga,
            Strategy::GaCmaes => Stage::Cmaes,
        }
    }

    fn is_periodic(&self, generation: usize) -> bool {
        generation.is_multiple_of(self.eval_period) || (self.eval_final && generation + 1 == self.total_generations)
    }
}

/// What the pipeline optimizes.
pub trait FitnessFn: Sync {
    /// Training fitness of one candidate at `generation`.
    fn fitness(&self, genome: &[f64], generation: usize) -> Result<f64>;

    /// Scores for a periodic evaluation of the current solution.
    fn periodic_scores(&self, genome: &[f64], generation: usize, episodes: usize) -> Result<Vec<f64>> {
        let _ = episodes;
        Ok(vec![self.fitness(genome, generation)?])
    }
}

impl<F> FitnessFn for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn fitness(&self, genome: &[f64], _generation: usize) -> Result<f64> {
        Ok(self(genome))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub stage: Stage,
    pub best_fitness: f64,
    pub best_so_far: f64,
    pub mean_fitness: f64,
    pub std_fitness: f64,
    pub periodic_eval_mean: Option<f64>,
    pub periodic_eval_std: Option<f64>,
    pub wallclock: Option<f64>,
}

/// Best periodically evaluated solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Champion {
    pub genome: Vec<f64>,
    pub generation: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Optimizer {
    Ga(Ga),
    Cmaes(Box<Cmaes>),
    OpenEs(OpenEs),
}

impl Optimizer {
    fn inner(&mut self) -> &mut dyn AskTell {
        match self {
            Optimizer::Ga(o) => o,
            Optimizer::Cmaes(o) => o.as_mut(),
            Optimizer::OpenEs(o) => o,
        }
    }

    fn inner_ref(&self) -> &dyn AskTell {
        match self {
            Optimizer::Ga(o) => o,
            Optimizer::Cmaes(o) => o.as_ref(),
            Optimizer::OpenEs(o) => o,
        }
    }
}

/// Bounded worker pool for candidate evaluation. Results are always
/// reassembled in candidate order.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self> {
        if n <= 1 {
            return Ok(Workers { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
        Ok(Workers { pool: Some(pool) })
    }

    pub fn sequential() -> Self {
        Workers { pool: None }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            Some(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pipeline {
    cfg: PipelineConfig,
    optimizer: Optimizer,
    generation: usize,
    history: Vec<HistoryRow>,
    champion: Option<Champion>,
    best_so_far: Option<f64>,
    elapsed_before: f64,
    #[serde(skip)]
    session_start: Option<Instant>,
    #[serde(skip)]
    dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub champion: Champion,
    pub history: Vec<HistoryRow>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, initial: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let optimizer = match cfg.strategy {
            Strategy::GaCmaes if cfg.ga_generations == 0 => Optimizer::Cmaes(Box::new(Cmaes::new(
                &cfg.cmaes,
                initial,
                seeds::derive(cfg.seed, domain::CMAES, 0),
            )?)),
            Strategy::GaCmaes => Optimizer::Ga(Ga::new(cfg.ga.clone(), initial, seeds::derive(cfg.seed, domain::GA, 0))?),
            Strategy::OpenEs => Optimizer::OpenEs(OpenEs::new(
                cfg.openes.clone(),
                initial,
                seeds::derive(cfg.seed, domain::OPENES, 0),
            )?),
        };
        Ok(Pipeline {
            cfg,
            optimizer,
            generation: 0,
            history: Vec::new(),
            champion: None,
            best_so_far: None,
            elapsed_before: 0.0,
            session_start: None,
            dump_dir: None,
        })
    }

    /// Where genomes that crash the evaluator are written.
    pub fn set_dump_dir(&mut self, dir: PathBuf) {
        self.dump_dir = Some(dir);
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Number of completed generations.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn stage(&self) -> Stage {
        match self.optimizer {
            Optimizer::Ga(_) => Stage::Ga,
            Optimizer::Cmaes(_) => Stage::Cmaes,
            Optimizer::OpenEs(_) => Stage::OpenEs,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.cfg.total_generations
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    pub fn champion(&self) -> Option<&Champion> {
        self.champion.as_ref()
    }

    pub fn current_solution(&self) -> Vec<f64> {
        self.optimizer.inner_ref().current_solution()
    }

    /// The CMA-ES state, once the pipeline has reached that stage.
    pub fn cmaes(&self) -> Option<&Cmaes> {
        match &self.optimizer {
            Optimizer::Cmaes(c) => Some(c),
            _ => None,
        }
    }

    fn dump_genome(&self, genome: &[f64], candidate: usize) -> String {
        let dir = self.dump_dir.clone().unwrap_or_else(std::env::temp_dir);
        let path = dir.join(format!("failed_genome_g{}_c{}.json", self.generation, candidate));
        let written = std::fs::create_dir_all(&dir)
            .map_err(Error::from)
            .and_then(|_| Ok(std::fs::write(&path, serde_json::to_vec(genome)?)?));
        match written {
            Ok(()) => path.display().to_string(),
            Err(e) => format!("<dump failed: {e}>"),
        }
    }

    /// Runs one generation: ask, evaluate, tell, log, and hand off to
    /// CMA-ES when the GA stage ends.
    pub fn step<F: FitnessFn>(&mut self, fitness: &F, workers: &Workers) -> Result<&HistoryRow> {
        if self.is_finished() {
            return Err(Error::Protocol("pipeline already finished".into()));
        }
        if self.cfg.record_wallclock && self.session_start.is_none() {
            self.session_start = Some(Instant::now());
        }
        let generation = self.generation;
        let stage = self.stage();
        let candidates = self.optimizer.inner().ask();

        let results = workers.map(&candidates, |_, g| fitness.fitness(g, generation));
        let mut scores = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(f) if f.is_finite() => scores.push(f),
                Ok(f) => {
                    let dump = self.dump_genome(&candidates[i], i);
                    return Err(Error::Evaluation { generation, reason: format!("fitness of candidate {i} is {f}"), dump });
                }
                Err(e) => {
                    let dump = self.dump_genome(&candidates[i], i);
                    return Err(Error::Evaluation { generation, reason: e.to_string(), dump });
                }
            }
        }
        if self.cfg.weight_decay > 0.0 {
            for (s, g) in scores.iter_mut().zip(&candidates) {
                let l2 = g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
                *s -= self.cfg.weight_decay * l2;
            }
        }

        self.optimizer.inner().tell(&scores)?;
        let best_fitness = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_so_far = self.best_so_far.map_or(best_fitness, |b| b.max(best_fitness));
        self.best_so_far = Some(best_so_far);
        let (mean_fitness, std_fitness) = mean_std(&scores);

        let (periodic_eval_mean, periodic_eval_std) = if self.cfg.is_periodic(generation) {
            let solution = self.current_solution();
            let scores = fitness
                .periodic_scores(&solution, generation, self.cfg.eval_episodes)
                .map_err(|e| Error::Evaluation {
                    generation,
                    reason: e.to_string(),
                    dump: self.dump_genome(&solution, usize::MAX),
                })?;
            let (mean, std) = mean_std(&scores);
            if self.champion.as_ref().is_none_or(|c| mean > c.mean) {
                self.champion = Some(Champion { genome: solution, generation, mean, std });
            }
            (Some(mean), Some(std))
        } else {
            (None, None)
        };

        if stage == Stage::Ga && generation + 1 == self.cfg.ga_generations && !self.is_last(generation) {
            let start = match &self.optimizer {
                Optimizer::Ga(ga) => ga.current_solution(),
                _ => unreachable!(),
            };
            log::info!("generation {generation}: handing GA champion to CMA-ES");
            self.optimizer = Optimizer::Cmaes(Box::new(Cmaes::new(
                &self.cfg.cmaes,
                &start,
                seeds::derive(self.cfg.seed, domain::CMAES, 0),
            )?));
        }

        let wallclock = self
            .session_start
            .map(|t| self.elapsed_before + t.elapsed().as_secs_f64());
        self.history.push(HistoryRow {
            generation,
            stage,
            best_fitness,
            best_so_far,
            mean_fitness,
            std_fitness,
            periodic_eval_mean,
            periodic_eval_std,
            wallclock,
        });
        self.generation += 1;
        Ok(self.history.last().unwrap())
    }

    fn is_last(&self, generation: usize) -> bool {
        generation + 1 >= self.cfg.total_generations
    }

    /// Folds the time spent in this session into the stored total, so a
    /// resumed run keeps counting from where it stopped.
    pub fn checkpoint_clock(&mut self) {
        if let Some(t) = self.session_start.take() {
            self.elapsed_before += t.elapsed().as_secs_f64();
            self.session_start = Some(Instant::now());
        }
    }

    pub fn into_outcome(self) -> Result<PipelineOutcome> {
        let champion = self
            .champion
            .ok_or_else(|| Error::Protocol("no periodic evaluation has run yet".into()))?;
        Ok(PipelineOutcome {
            champion,
            history: self.history,
        })
    }
}

/// Runs the whole schedule, calling `logger` after every generation.
pub fn run_pipeline<F, L>(
    cfg: PipelineConfig,
    initial: &[f64],
    fitness: &F,
    workers: &Workers,
    mut logger: L,
) -> Result<PipelineOutcome>
where
    F: FitnessFn,
    L: FnMut(&HistoryRow),
{
    let mut pipeline = Pipeline::new(cfg, initial)?;
    while !pipeline.is_finished() {
        logger(pipeline.step(fitness, workers)?);
    }
    pipeline.into_outcome()
}
