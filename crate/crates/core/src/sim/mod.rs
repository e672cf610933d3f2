//! Analytic simulation environments.
//!
//! Every environment is an ODE integrated with fixed-step RK4 plus (for the
//! ball family) a discrete bounce event. Dynamics are pure: identical
//! parameters, start states, and action sequences give bit-identical
//! trajectories on every run.

pub mod catalog;
pub mod dynamics;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::{mix, rng, seed_for};
use crate::space::ParamVector;
use crate::trajectory::{Trajectory, TrajectorySource};

pub use catalog::{benchmark_env_ids, catalog, catalog_markdown, env_spec, EnvSpec, EnvTier, DT};
pub use dynamics::{wrap_angle, CHAIN_REST, GRAVITY, PENDULUM_LENGTH};

use dynamics::Dynamics;

/// Something that produces an action given the step index and current state.
pub trait ActionDriver {
    fn action(&self, t: usize, state: &[f64]) -> Vec<f64>;
}

/// Replay a fixed action sequence.
pub struct ReplayDriver<'a>(pub &'a [Vec<f64>]);

impl ActionDriver for ReplayDriver<'_> {
    fn action(&self, t: usize, _state: &[f64]) -> Vec<f64> {
        self.0[t].clone()
    }
}

/// An instantiated simulation model: environment spec + one parameter setting.
#[derive(Debug, Clone)]
pub struct SimModel {
    spec: EnvSpec,
    theta: ParamVector,
    phys: Vec<f64>,
    dynamics: Dynamics,
    seed: u64,
}

/// Instantiate `env_id` at the normalized parameters `theta`. The seed only
/// drives the canonical start-state distribution; dynamics are deterministic.
pub fn make_env(env_id: &str, theta: &ParamVector, seed: u64) -> Result<SimModel> {
    let spec = env_spec(env_id)?;
    if theta.dim() != spec.space.dim() {
        return Err(CoreError::shape(
            format!("theta for `{env_id}`"),
            spec.space.dim(),
            theta.dim(),
        ));
    }
    let phys = spec.space.denormalize(theta)?;
    let dynamics = Dynamics::from_phys(&spec, &phys)?;
    Ok(SimModel {
        spec,
        theta: theta.clone(),
        phys,
        dynamics,
        seed,
    })
}

/// Instantiate `env_id` directly at physical parameters, which may lie
/// outside the catalog ranges. The stored normalized theta is the clamped
/// projection, for bookkeeping only.
pub fn make_env_phys(env_id: &str, phys: &[f64], seed: u64) -> Result<SimModel> {
    let spec = env_spec(env_id)?;
    if phys.len() != spec.space.dim() {
        return Err(CoreError::shape(
            format!("physical parameters for `{env_id}`"),
            spec.space.dim(),
            phys.len(),
        ));
    }
    if phys.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite(format!("physical parameters for `{env_id}`")));
    }
    let theta = spec.space.normalize_clamped(phys)?;
    let dynamics = Dynamics::from_phys(&spec, phys)?;
    Ok(SimModel {
        spec,
        theta,
        phys: phys.to_vec(),
        dynamics,
        seed,
    })
}

impl SimModel {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn phys(&self) -> &[f64] {
        &self.phys
    }

    /// Advance one timestep. Validates dimensions, clamps the action to the
    /// documented bound, integrates one RK4 step, then applies any discrete
    /// event (bounces).
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.spec.state_dim {
            return Err(CoreError::shape("state", self.spec.state_dim, state.len()));
        }
        if action.len() != self.spec.action_dim {
            return Err(CoreError::shape("action", self.spec.action_dim, action.len()));
        }
        let b = self.spec.action_bound;
        let clamped: Vec<f64> = action.iter().map(|a| a.clamp(-b, b)).collect();
        let mut next = dynamics::rk4_step(&self.dynamics, state, &clamped, self.spec.dt);
        self.dynamics.post_step(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "state after step in `{}`",
                self.spec.env_id
            )));
        }
        Ok(next)
    }

    /// Draw from the canonical start-state distribution, sub-stream `stream`.
    pub fn sample_start(&self, stream: u64) -> Vec<f64> {
        let mut r = rng(mix(seed_for(self.seed, self.spec.env_id), stream));
        match self.spec.env_id {
            "pendulum" => vec![r.gen_range(-1.0..1.0), r.gen_range(-0.5..0.5)],
            "spring-damper" => vec![r.gen_range(-1.0..1.0), r.gen_range(-0.5..0.5)],
            "bouncing-ball" => vec![r.gen_range(0.8..1.8), r.gen_range(-0.5..0.5)],
            "bouncing-ball-product" => vec![r.gen_range(1.0..2.0), 0.0],
            _ => {
                // chains: links near their rest offsets, at rest
                let n = self.spec.state_dim / 2;
                let mut s = Vec::with_capacity(2 * n);
                for i in 0..n {
                    s.push(i as f64 * CHAIN_REST + r.gen_range(-0.1..0.1));
                }
                s.extend(std::iter::repeat(0.0).take(n));
                s
            }
        }
    }

    /// Roll out `horizon` steps from `start` under `driver`.
    pub fn rollout(
        &self,
        start: &[f64],
        driver: &dyn ActionDriver,
        horizon: usize,
    ) -> Result<Trajectory> {
        if start.len() != self.spec.state_dim {
            return Err(CoreError::shape("start state", self.spec.state_dim, start.len()));
        }
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        states.push(start.to_vec());
        let mut state = start.to_vec();
        for t in 0..horizon {
            let b = self.spec.action_bound;
            let a: Vec<f64> = driver
                .action(t, &state)
                .iter()
                .map(|v| v.clamp(-b, b))
                .collect();
            state = self.step(&state, &a)?;
            actions.push(a);
            states.push(state.clone());
        }
        Trajectory::new(self.spec.env_id, states, actions, TrajectorySource::Simulated)
    }

    /// Roll out replaying a fixed action sequence.
    pub fn rollout_actions(&self, start: &[f64], actions: &[Vec<f64>]) -> Result<Trajectory> {
        self.rollout(start, &ReplayDriver(actions), actions.len())
    }

    /// Per-step reward r(s, a, s').
    pub fn step_reward(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        let u2: f64 = action.iter().map(|u| u * u).sum();
        match self.spec.env_id {
            "pendulum" => {
                let th = wrap_angle(next[0]);
                -(th * th + 0.1 * next[1] * next[1] + 0.001 * u2)
            }
            "spring-damper" => {
                let (x, v) = (next[0], next[1]);
                -(x * x + 0.1 * v * v + 0.001 * u2)
            }
            "bouncing-ball" | "bouncing-ball-product" => {
                let y = next[0];
                -((y - 1.0) * (y - 1.0) + 0.001 * u2)
            }
            _ => {
                // chains: forward displacement of the mean position
                let n = self.spec.state_dim / 2;
                let mean_next: f64 = next[..n].iter().sum::<f64>() / n as f64;
                let mean_prev: f64 = state[..n].iter().sum::<f64>() / n as f64;
                (mean_next - mean_prev) - 0.001 * u2
            }
        }
    }
}

/// Total return of a trajectory under its environment's documented reward.
pub fn env_return(tau: &Trajectory) -> Result<f64> {
    let spec = env_spec(&tau.env_id)?;
    if tau.state_dim() != spec.state_dim {
        return Err(CoreError::shape(
            format!("state dim for `{}`", tau.env_id),
            spec.state_dim,
            tau.state_dim(),
        ));
    }
    // reward depends only on the spec, not the parameters; any valid theta
    // instantiates the same reward
    let theta = ParamVector::new(vec![0.5; spec.space.dim()])?;
    let model = make_env(&tau.env_id, &theta, 0)?;
    let mut total = 0.0;
    for t in 0..tau.horizon() {
        total += model.step_reward(&tau.states()[t], &tau.actions()[t], &tau.states()[t + 1]);
    }
    Ok(total)
}

/// Central rollout-step budget. Shared by every simulator call inside one
/// benchmark cell so estimator comparisons stay fair.
#[derive(Debug)]
pub struct SimBudget {
    cap: u64,
    used: AtomicU64,
}

impl SimBudget {
    pub fn new(cap: u64) -> Self {
        SimBudget {
            cap,
            used: AtomicU64::new(0),
        }
    }

    /// Effectively unlimited; for tests and one-off tooling.
    pub fn unlimited() -> Self {
        SimBudget::new(u64::MAX)
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn remaining(&self) -> u64 {
        self.cap.saturating_sub(self.used())
    }

    /// Reserve `steps` if they fit; returns whether the charge succeeded.
    pub fn try_charge(&self, steps: u64) -> bool {
        let mut cur = self.used.load(Ordering::Relaxed);
        loop {
            if cur.saturating_add(steps) > self.cap {
                return false;
            }
            match self.used.compare_exchange(
                cur,
                cur + steps,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return true,
                Err(actual) => cur = actual,
            }
        }
    }

    /// Reserve `steps` or fail with a budget error.
    pub fn charge(&self, steps: u64) -> Result<()> {
        if self.try_charge(steps) {
            Ok(())
        } else {
            Err(CoreError::BudgetExhausted {
                used: self.used(),
                cap: self.cap,
                requested: steps,
            })
        }
    }
}
