//! Cart-pole swing-up.
//!
//! The pole is a uniform rod hinged on a cart that moves along a bounded
//! track. Episodes start with the pole hanging down; reward is high only when
//! the pole points up and the cart is near the center. Angle 0 is upright.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, EpisodeResult, StepOutcome};
use crate::error::{Error, Result};
use crate::network::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Velocities first, then positions with the new velocities.
    #[default]
    SemiImplicitEuler,
    /// Positions with the old velocities, then velocities.
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwingUpParams {
    pub m_cart: f64,
    pub m_pole: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub friction: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub max_steps: usize,
    /// Half-width of the uniform noise added to each state component at reset.
    pub reset_noise: f64,
    pub integrator: Integrator,
}

impl Default for SwingUpParams {
    fn default() -> Self {
        SwingUpParams {
            m_cart: 0.5,
            m_pole: 0.5,
            pole_length: 0.6,
            gravity: 9.82,
            friction: 0.1,
            force_mag: 10.0,
            dt: 0.01,
            x_threshold: 2.4,
            max_steps: 1000,
            reset_noise: 0.01,
            integrator: Integrator::SemiImplicitEuler,
        }
    }
}

impl SwingUpParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("env.m_cart", self.m_cart),
            ("env.m_pole", self.m_pole),
            ("env.pole_length", self.pole_length),
            ("env.gravity", self.gravity),
            ("env.force_mag", self.force_mag),
            ("env.dt", self.dt),
            ("env.x_threshold", self.x_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("env.friction", self.friction), ("env.reset_noise", self.reset_noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("env.max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwingUpState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone)]
pub struct CartPoleSwingUp {
    params: SwingUpParams,
    state: SwingUpState,
    t: usize,
    done: bool,
}

impl CartPoleSwingUp {
    pub fn new(params: SwingUpParams) -> Result<Self> {
        params.validate()?;
        Ok(CartPoleSwingUp {
            params,
            state: SwingUpState { theta: PI, ..Default::default() },
            t: 0,
            done: false,
        })
    }

    pub fn params(&self) -> &SwingUpParams {
        &self.params
    }

    pub fn state(&self) -> SwingUpState {
        self.state
    }

    pub fn elapsed_steps(&self) -> usize {
        self.t
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: SwingUpState) -> Vec<f64> {
        self.state = state;
        self.t = 0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        vec![s.x, s.x_dot, s.theta.cos(), s.theta.sin(), s.theta_dot]
    }

    /// `(ẍ, θ̈)` for the given state and applied force.
    pub fn accelerations(&self, s: &SwingUpState, force: f64) -> (f64, f64) {
        let p = &self.params;
        let total = p.m_cart + p.m_pole;
        let mpl = p.m_pole * p.pole_length;
        let (sin, cos) = s.theta.sin_cos();
        let drive = force - p.friction * s.x_dot;
        let w2 = s.theta_dot * s.theta_dot;
        let x_acc = (-2.0 * mpl * w2 * sin + 3.0 * p.m_pole * p.gravity * sin * cos + 4.0 * drive)
            / (4.0 * total - 3.0 * p.m_pole * cos * cos);
        let theta_acc = (-3.0 * mpl * w2 * sin * cos + 6.0 * total * p.gravity * sin + 6.0 * drive * cos)
            / (4.0 * p.pole_length * total - 3.0 * mpl * cos * cos);
        (x_acc, theta_acc)
    }

    /// Advances the physics by one `dt` without touching the step counter.
    pub fn integrate(&mut self, force: f64) {
        let (x_acc, theta_acc) = self.accelerations(&self.state, force);
        let dt = self.params.dt;
        let s = &mut self.state;
        match self.params.integrator {
            Integrator::SemiImplicitEuler => {
                s.x_dot += x_acc * dt;
                s.theta_dot += theta_acc * dt;
                s.x += s.x_dot * dt;
                s.theta += s.theta_dot * dt;
            }
            Integrator::Euler => {
                s.x += s.x_dot * dt;
                s.theta += s.theta_dot * dt;
                s.x_dot += x_acc * dt;
                s.theta_dot += theta_acc * dt;
            }
        }
    }

    /// Product of an uprightness term in [0, 1] and a centering term in [0, 1].
    pub fn reward(&self, s: &SwingUpState) -> f64 {
        let r_theta = (s.theta.cos() + 1.0) / 2.0;
        let r_x = ((s.x / self.params.x_threshold) * FRAC_PI_2).cos();
        // r_x turns negative only past the threshold, which ends the episode
        r_theta * r_x.max(0.0)
    }
}

impl Environment for CartPoleSwingUp {
    fn obs_dim(&self) -> usize {
        5
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = self.params.reset_noise;
        let mut noise = || if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        let state = SwingUpState {
            x: noise(),
            x_dot: noise(),
            theta: PI + noise(),
            theta_dot: noise(),
        };
        self.reset_to(state)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        if action.len() != 1 {
            return Err(Error::LengthMismatch {
                what: "action",
                expected: 1,
                actual: action.len(),
            });
        }
        if !action[0].is_finite() {
            return Err(Error::NonFinite("action"));
        }
        let force = action[0].clamp(-1.0, 1.0) * self.params.force_mag;
        self.integrate(force);
        self.t += 1;
        let s = self.state;
        self.done = s.x.abs() > self.params.x_threshold || self.t >= self.params.max_steps;
        Ok(StepOutcome {
            obs: self.observation(),
            reward: self.reward(&s),
            done: self.done,
        })
    }
}

/// One row of a recorded trajectory: the state after the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub action: f64,
    pub reward: f64,
}

/// Runs one episode and records every step.
pub fn record_trajectory<P: Policy + ?Sized>(
    policy: &mut P,
    env: &mut CartPoleSwingUp,
    seed: u64,
) -> Result<(EpisodeResult, Vec<TrajectoryRow>)> {
    policy.reset();
    let mut obs = env.reset(seed);
    let mut rows = Vec::new();
    let mut total = 0.0;
    loop {
        let action = policy.act(&obs)?;
        let out = env.step(&action)?;
        let s = env.state();
        rows.push(TrajectoryRow {
            t: env.elapsed_steps(),
            x: s.x,
            x_dot: s.x_dot,
            theta: s.theta,
            theta_dot: s.theta_dot,
            action: action[0],
            reward: out.reward,
        });
        total += out.reward;
        obs = out.obs;
        if out.done {
            break;
        }
    }
    let result = EpisodeResult {
        total_reward: total,
        steps: rows.len(),
        seed,
    };
    Ok((result, rows))
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    write_trajectory(std::fs::File::create(path)?, rows)
}

/// Writes the trajectory as CSV to any writer.
pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
