//! Environments and the rollout loop.

pub mod cartpole;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::Policy;

pub use cartpole::{CartPoleSwingUp, Integrator, SwingUpParams, SwingUpState};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    /// Starts a new episode; the seed fully determines the initial state.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Errors if called after the episode ended.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: usize,
    pub seed: u64,
}

/// Resets `env` and `policy`, then runs until the episode ends.
pub fn run_episode<P, E>(policy: &mut P, env: &mut E, seed: u64) -> Result<EpisodeResult>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    run_episode_observed(policy, env, seed, |_, _, _| {})
}

/// Like [`run_episode`], calling `observe(step, action, reward)` after every step.
pub fn run_episode_observed<P, E, F>(
    policy: &mut P,
    env: &mut E,
    seed: u64,
    mut observe: F,
) -> Result<EpisodeResult>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    F: FnMut(usize, &[f64], f64),
{
    policy.reset();
    let mut obs = env.reset(seed);
    let mut total_reward = 0.0;
    let mut steps = 0;
    loop {
        let action = policy.act(&obs)?;
        let out = env.step(&action)?;
        total_reward += out.reward;
        observe(steps, &action, out.reward);
        steps += 1;
        obs = out.obs;
        if out.done {
            break;
        }
    }
    Ok(EpisodeResult {
        total_reward,
        steps,
        seed,
    })
}
