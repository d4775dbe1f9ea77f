//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation.
//!
//! Strategy constants are the usual defaults derived from the dimension and
//! population size. Selection is purely rank based, so shifting or rescaling
//! all fitness values leaves every update unchanged. The eigendecomposition
//! of the covariance is refreshed lazily, once enough evaluations have
//! accumulated for the covariance to have moved noticeably.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_fitness, ranking, AskTell, BestSoFar};
use crate::error::{Error, Result};

/// Eigenvalues of C below `max_eigenvalue * EIGEN_FLOOR` are raised to that floor.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesConfig {
    /// `None` picks `4 + ⌊3 ln n⌋`.
    pub population_size: Option<usize>,
    pub initial_sigma: f64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            population_size: None,
            initial_sigma: 0.5,
        }
    }
}

impl CmaesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size.is_some_and(|p| p < 2) {
            return Err(Error::Config("cmaes.population_size must be >= 2".into()));
        }
        if !(self.initial_sigma.is_finite() && self.initial_sigma > 0.0) {
            return Err(Error::Config("cmaes.initial_sigma must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn lambda(&self, dim: usize) -> usize {
        self.population_size
            .unwrap_or_else(|| 4 + (3.0 * (dim as f64).ln()).floor() as usize)
    }
}

/// Learning rates and weights fixed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl StrategyParams {
    pub fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        StrategyParams {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cmaes {
    strategy: StrategyParams,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    /// Eigenvectors of `cov` as of the last decomposition.
    basis: DMatrix<f64>,
    /// Square roots of the matching eigenvalues.
    scales: DVector<f64>,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: usize,
    evaluations: usize,
    eigen_evaluations: usize,
    floor_repairs: usize,
    rng: ChaCha8Rng,
    /// Steps `B·D·z` of the outstanding population, one column per candidate.
    pending: Option<DMatrix<f64>>,
    best: BestSoFar,
}

impl Cmaes {
    pub fn new(cfg: &CmaesConfig, mean: &[f64], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = mean.len();
        if n == 0 {
            return Err(Error::Config("cmaes needs dim >= 1".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cmaes initial mean"));
        }
        let strategy = StrategyParams::new(n, cfg.lambda(n));
        Ok(Cmaes {
            strategy,
            mean: DVector::from_column_slice(mean),
            sigma: cfg.initial_sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            generation: 0,
            evaluations: 0,
            eigen_evaluations: 0,
            floor_repairs: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            best: BestSoFar::default(),
        })
    }

    pub fn strategy(&self) -> &StrategyParams {
        &self.strategy
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Number of times the eigenvalue floor had to repair the covariance.
    pub fn floor_repairs(&self) -> usize {
        self.floor_repairs
    }

    fn sample_steps(&mut self) -> DMatrix<f64> {
        let n = self.mean.len();
        let lambda = self.strategy.lambda;
        let z = DMatrix::from_fn(n, lambda, |_, _| StandardNormal.sample(&mut self.rng));
        let mut bd = self.basis.clone();
        for (j, mut col) in bd.column_iter_mut().enumerate() {
            col *= self.scales[j];
        }
        bd * z
    }

    fn update_eigensystem(&mut self) -> Result<()> {
        symmetrize(&mut self.cov);
        let eig = self.cov.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        if !(max.is_finite() && max > 0.0) {
            return Err(Error::Protocol(format!("covariance degenerate: largest eigenvalue {max}")));
        }
        let floor = max * EIGEN_FLOOR;
        let mut values = eig.eigenvalues;
        if values.iter().any(|&v| v.is_nan() || v < floor) {
            log::warn!(
                "covariance eigenvalue below floor at generation {}; repairing",
                self.generation
            );
            values.apply(|v| *v = if *v >= floor { *v } else { floor });
            let mut scaled = eig.eigenvectors.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= values[j];
            }
            self.cov = &scaled * eig.eigenvectors.transpose();
            symmetrize(&mut self.cov);
            self.floor_repairs += 1;
        }
        self.scales = values.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        self.eigen_evaluations = self.evaluations;
        Ok(())
    }
}

/// Copies the upper triangle onto the lower one.
fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
}

impl AskTell for Cmaes {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn population_size(&self) -> usize {
        self.strategy.lambda
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn ask(&mut self) -> Vec<Vec<f64>> {
        if self.pending.is_none() {
            self.pending = Some(self.sample_steps());
        }
        let steps = self.pending.as_ref().unwrap();
        steps
            .column_iter()
            .map(|y| (&self.mean + y * self.sigma).as_slice().to_vec())
            .collect()
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<()> {
        check_fitness(fitness, self.strategy.lambda)?;
        let Some(steps) = self.pending.take() else {
            return Err(Error::Protocol("cmaes tell without a preceding ask".into()));
        };
        let s = &self.strategy;
        let n = self.mean.len();
        let order = ranking(fitness);

        let best_idx = order[0];
        let best_x = &self.mean + steps.column(best_idx) * self.sigma;
        self.best.offer(best_x.as_slice(), fitness[best_idx]);

        let mut selected = DMatrix::zeros(n, s.mu);
        let mut weighted = DMatrix::zeros(n, s.mu);
        let mut step_w = DVector::zeros(n);
        for (k, &idx) in order[..s.mu].iter().enumerate() {
            let y = steps.column(idx);
            selected.set_column(k, &y);
            weighted.set_column(k, &(y * s.weights[k]));
            step_w.axpy(s.weights[k], &y, 1.0);
        }

        self.mean.axpy(self.sigma, &step_w, 1.0);

        // C^{-1/2} · y_w through the last eigendecomposition
        let mut rotated = self.basis.tr_mul(&step_w);
        rotated.component_div_assign(&self.scales);
        let whitened = &self.basis * rotated;

        self.path_sigma *= 1.0 - s.c_sigma;
        self.path_sigma.axpy((s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt(), &whitened, 1.0);

        self.generation += 1;
        self.evaluations += s.lambda;

        let ps_norm = self.path_sigma.norm();
        let correction = (1.0 - (1.0 - s.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let hsig = ps_norm / correction / s.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };

        self.path_c *= 1.0 - s.c_c;
        self.path_c.axpy(hsig_f * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt(), &step_w, 1.0);

        let decay = 1.0 - s.c_1 - s.c_mu + (1.0 - hsig_f) * s.c_1 * s.c_c * (2.0 - s.c_c);
        let selected_t = selected.transpose();
        self.cov.gemm(s.c_mu, &weighted, &selected_t, decay);
        self.cov.ger(s.c_1, &self.path_c, &self.path_c, 1.0);
        symmetrize(&mut self.cov);

        self.sigma *= ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Protocol(format!("cmaes step size degenerated to {}", self.sigma)));
        }

        let lag = s.lambda as f64 / (s.c_1 + s.c_mu) / n as f64 / 10.0;
        if (self.evaluations - self.eigen_evaluations) as f64 > lag {
            self.update_eigensystem()?;
        }
        Ok(())
    }

    fn current_solution(&self) -> Vec<f64> {
        self.mean.as_slice().to_vec()
    }

    fn best(&self) -> Option<(&[f64], f64)> {
        self.best.get()
    }
}
