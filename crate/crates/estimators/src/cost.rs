//! Calibration targets: the objective every estimator minimizes.
//!
//! A target bundles the reference trajectories, the environment id, a shared
//! simulation-step budget, and the reward mode. Cost of a proposal is either
//! the mean trajectory error against the references (actions replayed, same
//! starts) or the negated learned reward from an online discriminator.
//! Identical proposals always produce identical costs: every rollout is a
//! pure function of the proposal and the frozen references.

use serde::{Deserialize, Serialize};
use sipe_core::sim::{make_env, ReplayDriver, SimBudget, SimModel};
use sipe_core::{
    trajectory_mse, CoreError, ParamVector, Result, Trajectory, TrajectorySource,
};

use crate::discriminator::Discriminator;
use crate::features::FeatureSpec;
use crate::policy::LinearPolicy;

/// How a proposal's rollouts are turned into a scalar cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Mean squared state error against the references.
    Mse,
    /// Negative mean discriminator log-probability of "reference".
    Learned,
}

/// One reference trajectory, optionally paired with the policy that produced
/// it (present when references come from a trained controller rather than a
/// scripted exciter).
#[derive(Debug, Clone)]
pub struct RefTraj {
    pub tau: Trajectory,
    pub policy: Option<LinearPolicy>,
}

impl RefTraj {
    pub fn scripted(tau: Trajectory) -> Self {
        Self { tau, policy: None }
    }
}

pub struct CalibTarget<'a> {
    env_id: String,
    refs: Vec<RefTraj>,
    budget: &'a SimBudget,
    mode: RewardMode,
    disc: Option<Discriminator>,
    sim_seed: u64,
}

impl<'a> CalibTarget<'a> {
    pub fn new(
        env_id: &str,
        refs: Vec<RefTraj>,
        budget: &'a SimBudget,
        mode: RewardMode,
        seed: u64,
    ) -> Result<Self> {
        if refs.is_empty() {
            return Err(CoreError::EmptyInput("reference trajectories".into()));
        }
        let spec = sipe_core::sim::env_spec(env_id)?;
        for r in &refs {
            if r.tau.state_dim() != spec.state_dim || r.tau.horizon() == 0 {
                return Err(CoreError::shape(
                    "reference trajectory",
                    format!("state dim {}, horizon >= 1", spec.state_dim),
                    format!("state dim {}, horizon {}", r.tau.state_dim(), r.tau.horizon()),
                ));
            }
        }
        let disc = match mode {
            RewardMode::Mse => None,
            RewardMode::Learned => Some(Discriminator::new(
                FeatureSpec { state_dim: spec.state_dim, action_dim: spec.action_dim },
                sipe_core::rng::seed_for(seed, "calib-disc"),
            )?),
        };
        Ok(Self { env_id: env_id.into(), refs, budget, mode, disc, sim_seed: seed })
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn refs(&self) -> &[RefTraj] {
        &self.refs
    }

    pub fn n_refs(&self) -> usize {
        self.refs.len()
    }

    pub fn mode(&self) -> RewardMode {
        self.mode
    }

    pub fn budget(&self) -> &SimBudget {
        self.budget
    }

    pub fn param_dim(&self) -> Result<usize> {
        Ok(sipe_core::sim::env_spec(&self.env_id)?.space.dim())
    }

    /// Total steps one full-cost evaluation charges.
    pub fn steps_per_cost(&self) -> u64 {
        self.refs.iter().map(|r| r.tau.horizon() as u64).sum()
    }

    /// Roll the proposal out against reference `idx`: same start state, and
    /// either the reference's recorded actions replayed or its policy closed
    /// over the simulated states.
    pub fn rollout_like_ref(&self, theta: &ParamVector, idx: usize) -> Result<Trajectory> {
        let r = &self.refs[idx];
        self.budget.charge(r.tau.horizon() as u64)?;
        let model = make_env(&self.env_id, theta, self.sim_seed)?;
        let tau = match &r.policy {
            Some(policy) => model.rollout(&r.tau.start_state, policy, r.tau.horizon())?,
            None => model.rollout_actions(&r.tau.start_state, r.tau.actions())?,
        };
        Ok(tau.with_source(TrajectorySource::Simulated))
    }

    fn cost_of_rollout(&self, sim: &Trajectory, idx: usize) -> Result<f64> {
        match self.mode {
            RewardMode::Mse => trajectory_mse(sim, &self.refs[idx].tau),
            RewardMode::Learned => {
                let disc = self.disc.as_ref().ok_or_else(|| {
                    CoreError::invalid("calibration target", "learned mode without discriminator")
                })?;
                Ok(-disc.learned_reward(sim)?)
            }
        }
    }

    /// Mean cost over all references.
    pub fn cost(&self, theta: &ParamVector) -> Result<f64> {
        let mut total = 0.0;
        for idx in 0..self.refs.len() {
            let sim = self.rollout_like_ref(theta, idx)?;
            total += self.cost_of_rollout(&sim, idx)?;
        }
        Ok(total / self.refs.len() as f64)
    }

    /// Cost against a single reference, chosen by `rotation % n_refs`. Cheap
    /// variant for inner loops that evaluate many perturbations.
    pub fn cost_single(&self, theta: &ParamVector, rotation: u64) -> Result<f64> {
        let idx = (rotation % self.refs.len() as u64) as usize;
        let sim = self.rollout_like_ref(theta, idx)?;
        self.cost_of_rollout(&sim, idx)
    }

    /// In learned mode, one discriminator update on the given proposals'
    /// rollouts versus the references. No-op in mse mode. Returns the batch
    /// loss when a step ran.
    pub fn observe_iteration(&mut self, proposals: &[ParamVector]) -> Result<Option<f64>> {
        if self.mode == RewardMode::Mse || proposals.is_empty() {
            return Ok(None);
        }
        let mut sims = Vec::with_capacity(proposals.len());
        for (i, theta) in proposals.iter().enumerate() {
            sims.push(self.rollout_like_ref(theta, i % self.refs.len())?);
        }
        let refs: Vec<Trajectory> = self.refs.iter().map(|r| r.tau.clone()).collect();
        let disc = self.disc.as_mut().unwrap();
        Ok(Some(disc.train_step(&refs, &sims)?))
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        self.disc.as_ref()
    }

    /// Whether `n_rollouts` reference-length rollouts still fit the budget.
    pub fn fits(&self, n_rollouts: u64) -> bool {
        let per = self.refs.iter().map(|r| r.tau.horizon() as u64).max().unwrap_or(0);
        self.budget.remaining() >= n_rollouts.saturating_mul(per)
    }
}

/// Simulate the model at `theta` from each reference's start, replaying its
/// actions. Used by dataset-driven estimators that need (trajectory, theta)
/// training pairs rather than a cost.
pub fn simulate_refs(
    env_id: &str,
    theta: &ParamVector,
    refs: &[RefTraj],
    seed: u64,
    budget: &SimBudget,
) -> Result<Vec<Trajectory>> {
    let model: SimModel = make_env(env_id, theta, seed)?;
    let mut out = Vec::with_capacity(refs.len());
    for r in refs {
        budget.charge(r.tau.horizon() as u64)?;
        let driver = ReplayDriver(r.tau.actions());
        let tau = model.rollout(&r.tau.start_state, &driver, r.tau.horizon())?;
        out.push(tau);
    }
    Ok(out)
}
