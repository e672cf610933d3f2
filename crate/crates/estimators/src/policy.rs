//! Linear state-feedback policies, a cross-entropy trainer, and transfer
//! scoring.
//!
//! Transfer evaluation answers: how much of the achievable return on the
//! true-parameter environment does a policy trained on the calibrated model
//! recover? The score normalizes the source-trained return against a
//! target-trained baseline, with the environment's random-policy return
//! acting as the floor so that "did nothing useful" maps near zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sipe_core::nn::Mat;
use sipe_core::rng::{mix, rng, seed_for};
use sipe_core::sim::{env_return, make_env, ActionDriver, SimBudget, SimModel};
use sipe_core::{CoreError, ParamVector, Result};

use crate::estimate::Estimate;

/// Affine state feedback u = G s + b, clamped by the environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub gain: Mat,
    pub bias: Vec<f64>,
}

impl LinearPolicy {
    pub fn zeros(state_dim: usize, action_dim: usize) -> Self {
        Self { gain: Mat::zeros(action_dim, state_dim), bias: vec![0.0; action_dim] }
    }

    pub fn from_flat(state_dim: usize, action_dim: usize, flat: &[f64]) -> Result<Self> {
        let want = action_dim * state_dim + action_dim;
        if flat.len() != want {
            return Err(CoreError::shape("policy flat vector", want.to_string(), flat.len().to_string()));
        }
        Ok(Self {
            gain: Mat::from_vec(action_dim, state_dim, flat[..action_dim * state_dim].to_vec()),
            bias: flat[action_dim * state_dim..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.gain.data().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn n_params(state_dim: usize, action_dim: usize) -> usize {
        action_dim * state_dim + action_dim
    }
}

impl ActionDriver for LinearPolicy {
    fn action(&self, _t: usize, state: &[f64]) -> Vec<f64> {
        let mut u = self.bias.clone();
        for a in 0..self.gain.rows() {
            for s in 0..self.gain.cols() {
                u[a] += self.gain.get(a, s) * state[s];
            }
        }
        u
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub init_std: f64,
    pub std_floor: f64,
    pub episodes_per_candidate: usize,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            iterations: 20,
            init_std: 0.5,
            std_floor: 0.02,
            episodes_per_candidate: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CemResult {
    pub policy: LinearPolicy,
    /// Best candidate mean return per iteration.
    pub best_returns: Vec<f64>,
    pub final_return: f64,
}

/// Environments an episode runs in. `episode` indexes deterministically into
/// whatever distribution the caller wants (a fixed model, samples from an
/// estimate, a uniform randomization).
pub trait EnvSampler {
    fn env(&mut self, episode: u64) -> Result<SimModel>;
}

/// Always the same parameters.
pub struct FixedEnv {
    pub env_id: String,
    pub theta: ParamVector,
    pub seed: u64,
}

impl EnvSampler for FixedEnv {
    fn env(&mut self, _episode: u64) -> Result<SimModel> {
        make_env(&self.env_id, &self.theta, self.seed)
    }
}

/// Parameters drawn from a calibration estimate per episode.
pub struct EstimateEnv {
    pub env_id: String,
    pub estimate: Estimate,
    pub seed: u64,
}

impl EnvSampler for EstimateEnv {
    fn env(&mut self, episode: u64) -> Result<SimModel> {
        let mut r = rng(mix(seed_for(self.seed, "estimate-env"), episode));
        let theta = self.estimate.sample_theta(&mut r)?;
        make_env(&self.env_id, &theta, self.seed)
    }
}

/// Parameters uniform over the cube per episode.
pub struct UniformEnv {
    pub env_id: String,
    pub dim: usize,
    pub seed: u64,
}

impl EnvSampler for UniformEnv {
    fn env(&mut self, episode: u64) -> Result<SimModel> {
        let mut r = rng(mix(seed_for(self.seed, "uniform-env"), episode));
        let theta = ParamVector::new((0..self.dim).map(|_| r.gen_range(0.0..=1.0)).collect())?;
        make_env(&self.env_id, &theta, self.seed)
    }
}

fn episode_return(
    model: &SimModel,
    policy: &LinearPolicy,
    start_stream: u64,
    horizon: usize,
    budget: &SimBudget,
) -> Result<f64> {
    budget.charge(horizon as u64)?;
    let start = model.sample_start(start_stream);
    let tau = model.rollout(&start, policy, horizon)?;
    env_return(&tau)
}

/// Mean return of `policy` over `episodes` seeded episodes.
pub fn evaluate_policy(
    sampler: &mut dyn EnvSampler,
    policy: &LinearPolicy,
    episodes: usize,
    horizon: usize,
    eval_seed: u64,
    budget: &SimBudget,
) -> Result<f64> {
    if episodes == 0 {
        return Err(CoreError::EmptyInput("evaluation episodes".into()));
    }
    let mut total = 0.0;
    for e in 0..episodes {
        let model = sampler.env(e as u64)?;
        total += episode_return(&model, policy, seed_for(eval_seed, "eval-start") + e as u64, horizon, budget)?;
    }
    Ok(total / episodes as f64)
}

/// Cross-entropy search over flat policy parameters. Candidates within a
/// generation share the same episode environments and start states (common
/// random numbers), so selection ranks policies rather than luck. The
/// returned policy is the final distribution mean; `iterations == 0` yields
/// the untrained zero policy. Budget exhaustion stops the search early and
/// keeps whatever the mean was at that point.
pub fn cem_train(
    sampler: &mut dyn EnvSampler,
    state_dim: usize,
    action_dim: usize,
    horizon: usize,
    cfg: &CemConfig,
    budget: &SimBudget,
) -> Result<CemResult> {
    if cfg.elites == 0 || cfg.elites > cfg.population {
        return Err(CoreError::invalid(
            "cem elites",
            format!("{} must be in 1..={}", cfg.elites, cfg.population),
        ));
    }
    if cfg.episodes_per_candidate == 0 {
        return Err(CoreError::EmptyInput("cem episodes per candidate".into()));
    }
    let dim = LinearPolicy::n_params(state_dim, action_dim);
    let mut mean = vec![0.0; dim];
    let mut std = vec![cfg.init_std; dim];
    let mut best_returns = Vec::new();

    'outer: for iter in 0..cfg.iterations {
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.population);
        for c in 0..cfg.population {
            let mut r: ChaCha8Rng =
                rng(mix(seed_for(cfg.seed, "cem"), (iter * cfg.population + c) as u64));
            let flat: Vec<f64> = (0..dim)
                .map(|d| mean[d] + std[d] * crate::gaussian(&mut r))
                .collect();
            let policy = LinearPolicy::from_flat(state_dim, action_dim, &flat)?;
            let mut total = 0.0;
            for e in 0..cfg.episodes_per_candidate {
                // episode key shared by every candidate in this generation
                let episode = (iter * cfg.episodes_per_candidate + e) as u64;
                let model = sampler.env(episode)?;
                match episode_return(&model, &policy, episode, horizon, budget) {
                    Ok(ret) => total += ret,
                    Err(CoreError::BudgetExhausted { .. }) => break 'outer,
                    Err(e) => return Err(e),
                }
            }
            scored.push((total / cfg.episodes_per_candidate as f64, flat));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        best_returns.push(scored[0].0);
        for d in 0..dim {
            let m = scored[..cfg.elites].iter().map(|(_, f)| f[d]).sum::<f64>() / cfg.elites as f64;
            let v = scored[..cfg.elites]
                .iter()
                .map(|(_, f)| (f[d] - m) * (f[d] - m))
                .sum::<f64>()
                / cfg.elites as f64;
            mean[d] = m;
            std[d] = v.sqrt().max(cfg.std_floor);
        }
    }

    let policy = LinearPolicy::from_flat(state_dim, action_dim, &mean)?;
    let final_return = match evaluate_policy(
        sampler,
        &policy,
        cfg.episodes_per_candidate.max(4),
        horizon,
        seed_for(cfg.seed, "cem-final-eval"),
        budget,
    ) {
        Ok(r) => r,
        // keep the policy; fall back to the last generation's best score
        Err(CoreError::BudgetExhausted { .. }) => best_returns.last().copied().unwrap_or(0.0),
        Err(e) => return Err(e),
    };
    Ok(CemResult { policy, best_returns, final_return })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferConfig {
    pub cem: CemConfig,
    pub eval_episodes: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub score: f64,
    pub source_return: f64,
    pub target_return: f64,
    pub floor: f64,
}

/// Train one policy inside the source distribution and one on the target
/// environment, evaluate both on the target, and report
/// (source - floor) / (target - floor).
pub fn transfer_score(
    env_id: &str,
    source: &mut dyn EnvSampler,
    target_theta: &ParamVector,
    cfg: &TransferConfig,
    seed: u64,
    budget: &SimBudget,
) -> Result<TransferOutcome> {
    let spec = sipe_core::sim::env_spec(env_id)?;
    let floor = spec.return_floor * cfg.horizon as f64 / spec.horizon as f64;

    let mut src_cfg = cfg.cem.clone();
    src_cfg.seed = seed_for(seed, "transfer-source");
    let src = cem_train(source, spec.state_dim, spec.action_dim, cfg.horizon, &src_cfg, budget)?;

    let mut tgt_sampler = FixedEnv { env_id: env_id.into(), theta: target_theta.clone(), seed };
    let mut tgt_cfg = cfg.cem.clone();
    tgt_cfg.seed = seed_for(seed, "transfer-target");
    let tgt = cem_train(
        &mut tgt_sampler,
        spec.state_dim,
        spec.action_dim,
        cfg.horizon,
        &tgt_cfg,
        budget,
    )?;

    // same target env and same start streams for both evaluations
    let mut eval_env = FixedEnv { env_id: env_id.into(), theta: target_theta.clone(), seed };
    let rs = evaluate_policy(&mut eval_env, &src.policy, cfg.eval_episodes, cfg.horizon, seed, budget)?;
    let rt = evaluate_policy(&mut eval_env, &tgt.policy, cfg.eval_episodes, cfg.horizon, seed, budget)?;

    let denom = rt - floor;
    if denom.abs() < 1e-9 * denom.abs().max(1.0) {
        return Err(CoreError::invalid(
            "transfer score",
            "target-trained return is indistinguishable from the floor",
        ));
    }
    Ok(TransferOutcome { score: (rs - floor) / denom, source_return: rs, target_return: rt, floor })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip() {
        let p = LinearPolicy::from_flat(2, 1, &[0.1, -0.2, 0.3]).unwrap();
        assert_eq!(p.to_flat(), vec![0.1, -0.2, 0.3]);
        let u = p.action(0, &[1.0, 2.0]);
        assert!((u[0] - (0.3 + 0.1 * 1.0 - 0.2 * 2.0)).abs() < 1e-12);
        assert!(LinearPolicy::from_flat(2, 1, &[0.1]).is_err());
    }

    #[test]
    fn zero_iterations_returns_zero_policy() {
        let mut env = FixedEnv {
            env_id: "pendulum".into(),
            theta: ParamVector::new(vec![0.5, 0.5]).unwrap(),
            seed: 1,
        };
        let budget = SimBudget::unlimited();
        let cfg = CemConfig { iterations: 0, ..CemConfig::default() };
        let out = cem_train(&mut env, 2, 1, 50, &cfg, &budget).unwrap();
        assert!(out.policy.to_flat().iter().all(|&v| v == 0.0));
        assert!(out.best_returns.is_empty());
    }

    #[test]
    fn cem_improves_pendulum_return() {
        let theta = ParamVector::new(vec![0.5, 0.5]).unwrap();
        let mut env = FixedEnv { env_id: "pendulum".into(), theta: theta.clone(), seed: 2 };
        let budget = SimBudget::unlimited();
        let cfg = CemConfig { iterations: 10, population: 32, seed: 3, ..CemConfig::default() };
        let out = cem_train(&mut env, 2, 1, 100, &cfg, &budget).unwrap();
        let mut eval_env = FixedEnv { env_id: "pendulum".into(), theta, seed: 2 };
        let zero = evaluate_policy(
            &mut eval_env,
            &LinearPolicy::zeros(2, 1),
            4,
            100,
            7,
            &budget,
        )
        .unwrap();
        let trained = evaluate_policy(&mut eval_env, &out.policy, 4, 100, 7, &budget).unwrap();
        assert!(trained > zero, "trained {trained} <= passive {zero}");
    }

    #[test]
    fn budget_exhaustion_returns_mean_so_far() {
        let mut env = FixedEnv {
            env_id: "pendulum".into(),
            theta: ParamVector::new(vec![0.5, 0.5]).unwrap(),
            seed: 1,
        };
        // enough for roughly one generation at horizon 50
        let budget = SimBudget::new(32 * 2 * 50 + 10);
        let cfg = CemConfig { iterations: 50, population: 32, seed: 3, ..CemConfig::default() };
        let out = cem_train(&mut env, 2, 1, 50, &cfg, &budget).unwrap();
        assert!(out.best_returns.len() <= 2);
        assert!(budget.used() <= budget.cap());
    }

    #[test]
    fn deterministic_training() {
        let theta = ParamVector::new(vec![0.4, 0.6]).unwrap();
        let budget = SimBudget::unlimited();
        let cfg = CemConfig { iterations: 3, population: 16, seed: 11, ..CemConfig::default() };
        let run = |_: ()| {
            let mut env = FixedEnv { env_id: "pendulum".into(), theta: theta.clone(), seed: 5 };
            cem_train(&mut env, 2, 1, 40, &cfg, &budget).unwrap()
        };
        let a = run(());
        let b = run(());
        assert_eq!(a.policy.to_flat(), b.policy.to_flat());
        assert_eq!(a.best_returns, b.best_returns);
    }
}
