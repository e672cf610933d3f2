//! Benchmark configuration: a TOML file with `[run]`, `[env.<id>]`, and
//! `[estimator.<id>]` sections. Unknown keys anywhere are hard errors, so a
//! typo cannot silently fall back to a default.
//!
//! Hyperparameter protocol: the `tuning` profile may only touch the two
//! designated tuning environments and calibrates against their validation
//! splits; the `benchmark` profile runs any environments against reference
//! splits. The benchmark runner refuses any other combination.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sipe_core::{CoreError, Result};

/// Environments whose validation splits drive hyperparameter tuning: one
/// sanity-tier system and one contact-rich system.
pub const TUNING_ENVS: [&str; 2] = ["pendulum", "bouncing-ball"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Tuning,
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Regression,
    Bayesopt,
    Maml,
    Simopt,
    Adr,
    Bayessim,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Regression,
        EstimatorKind::Bayesopt,
        EstimatorKind::Maml,
        EstimatorKind::Simopt,
        EstimatorKind::Adr,
        EstimatorKind::Bayessim,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            EstimatorKind::Regression => "regression",
            EstimatorKind::Bayesopt => "bayesopt",
            EstimatorKind::Maml => "maml",
            EstimatorKind::Simopt => "simopt",
            EstimatorKind::Adr => "adr",
            EstimatorKind::Bayessim => "bayessim",
        }
    }

    /// Whether the estimator can consume discriminator-learned rewards.
    pub fn supports_learned_rewards(&self) -> bool {
        matches!(self, EstimatorKind::Simopt | EstimatorKind::Adr)
    }

    /// Whether the estimator reports a particle population (and therefore
    /// both best-particle and mean-particle accuracy).
    pub fn is_particle_method(&self) -> bool {
        matches!(self, EstimatorKind::Simopt | EstimatorKind::Adr | EstimatorKind::Bayessim)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EstimatorKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.id()).collect();
                CoreError::invalid(
                    "estimator id",
                    format!("`{s}` (valid: {})", valid.join(", ")),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    /// Use pre-generated dataset trajectories.
    Demonstrations,
    /// Train a policy on the target system inside the cell and roll out
    /// fresh references; the cell's convergence flag reflects that policy.
    LearnedPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModeCfg {
    Mse,
    Learned,
}

fn default_seeds() -> u32 {
    3
}

fn default_calib_budget() -> u64 {
    600_000
}

fn default_n_reference() -> usize {
    8
}

fn default_n_train() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSection {
    pub cem_iterations: usize,
    pub population: usize,
    pub elites: usize,
    pub episodes_per_candidate: usize,
    pub eval_episodes: usize,
    /// 0 means the environment's own horizon.
    pub horizon: usize,
    /// 0 means unlimited.
    pub budget: u64,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            cem_iterations: 15,
            population: 64,
            elites: 8,
            episodes_per_candidate: 2,
            eval_episodes: 4,
            horizon: 0,
            budget: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub profile: Profile,
    pub seeds: u32,
    /// Empty means every benchmark-tier environment.
    pub envs: Vec<String>,
    /// Empty means all six estimators.
    pub estimators: Vec<EstimatorKind>,
    pub trajectory_source: TrajectorySource,
    pub reward_mode: RewardModeCfg,
    /// Simulator-step budget each estimator may spend per cell.
    pub calib_budget: u64,
    pub n_reference: usize,
    /// Simulations available to dataset-trained estimators (regression,
    /// maml meta-training probes, bayessim); drawn from calib_budget.
    pub n_train: usize,
    pub variant: crate::dataset::Variant,
    pub transfer: TransferSection,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            profile: Profile::Benchmark,
            seeds: default_seeds(),
            envs: Vec::new(),
            estimators: Vec::new(),
            trajectory_source: TrajectorySource::Demonstrations,
            reward_mode: RewardModeCfg::Mse,
            calib_budget: default_calib_budget(),
            n_reference: default_n_reference(),
            n_train: default_n_train(),
            variant: crate::dataset::Variant::Default,
            transfer: TransferSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub n_reference: Option<usize>,
    pub n_train: Option<usize>,
    /// Reference trajectory horizon; defaults to the catalog horizon.
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RegressionSection {
    fn default() -> Self {
        let d = sipe_estimators::regression::RegressionConfig::default();
        Self { epochs: d.epochs, batch_size: d.batch_size, learning_rate: d.learning_rate }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesOptSection {
    pub proposals: usize,
    pub init_random: usize,
    pub candidates_per_round: usize,
    pub kappa: f64,
    pub xi: f64,
    pub length_scale: f64,
    pub signal_std: f64,
    pub noise_std: f64,
}

impl Default for BayesOptSection {
    fn default() -> Self {
        let d = sipe_estimators::bayesopt::BayesOptConfig::default();
        Self {
            proposals: d.proposals,
            init_random: d.init_random,
            candidates_per_round: d.candidates_per_round,
            kappa: d.kappa,
            xi: d.xi,
            length_scale: d.length_scale,
            signal_std: d.signal_std,
            noise_std: d.noise_std,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MamlSection {
    pub meta_iters: usize,
    pub tasks_per_batch: usize,
    pub k_inner: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub hidden: usize,
    pub adapt_steps: usize,
    pub fd_step: f64,
}

impl Default for MamlSection {
    fn default() -> Self {
        let d = sipe_estimators::maml::MamlConfig::default();
        Self {
            meta_iters: d.meta_iters,
            tasks_per_batch: d.tasks_per_batch,
            k_inner: d.k_inner,
            inner_lr: d.inner_lr,
            outer_lr: d.outer_lr,
            hidden: d.hidden,
            adapt_steps: 10,
            fd_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptSection {
    pub iterations: usize,
    pub particles: usize,
    pub epsilon: f64,
    pub init_var: f64,
    pub var_floor: f64,
}

impl Default for SimOptSection {
    fn default() -> Self {
        let d = sipe_estimators::simopt::SimOptConfig::default();
        Self {
            iterations: d.iterations,
            particles: d.particles,
            epsilon: d.epsilon,
            init_var: d.init_var,
            var_floor: d.var_floor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdrSection {
    pub iterations: usize,
    pub particles: usize,
    pub pairs: usize,
    pub sigma: f64,
    pub step_size: f64,
    pub temperature: f64,
    pub fixed_bandwidth: Option<f64>,
}

impl Default for AdrSection {
    fn default() -> Self {
        let d = sipe_estimators::adr::AdrConfig::default();
        Self {
            iterations: d.iterations,
            particles: d.particles,
            pairs: d.pairs,
            sigma: d.sigma,
            step_size: d.step_size,
            temperature: d.temperature,
            fixed_bandwidth: d.fixed_bandwidth,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesSimSection {
    pub components: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for BayesSimSection {
    fn default() -> Self {
        let d = sipe_estimators::bayessim::BayesSimConfig::default();
        Self {
            components: d.components,
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSections {
    pub regression: RegressionSection,
    pub bayesopt: BayesOptSection,
    pub maml: MamlSection,
    pub simopt: SimOptSection,
    pub adr: AdrSection,
    pub bayessim: BayesSimSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub run: RunSection,
    #[serde(rename = "env")]
    pub envs: BTreeMap<String, EnvSection>,
    #[serde(rename = "estimator")]
    pub estimators: EstimatorSections,
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text)
            .map_err(|e| CoreError::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.run.seeds == 0 {
            return Err(CoreError::invalid("run.seeds", "must be at least 1"));
        }
        for id in self.run.envs.iter().chain(self.envs.keys()) {
            sipe_core::sim::env_spec(id)?;
        }
        if self.run.reward_mode == RewardModeCfg::Learned {
            let offenders: Vec<&str> = self
                .active_estimators()
                .into_iter()
                .filter(|k| !k.supports_learned_rewards())
                .map(|k| k.id())
                .collect();
            if !offenders.is_empty() {
                return Err(CoreError::invalid(
                    "run.reward_mode",
                    format!(
                        "learned rewards are only available to simopt and adr, not: {}",
                        offenders.join(", ")
                    ),
                ));
            }
        }
        if self.run.profile == Profile::Tuning {
            let outside: Vec<String> = self
                .active_envs()
                .into_iter()
                .filter(|e| !TUNING_ENVS.contains(&e.as_str()))
                .collect();
            if !outside.is_empty() {
                return Err(CoreError::invalid(
                    "run.profile",
                    format!(
                        "tuning profile may only use the validation splits of {}, got: {}",
                        TUNING_ENVS.join(" and "),
                        outside.join(", ")
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Environments this run covers: the configured list, or every
    /// benchmark-tier environment when the list is empty.
    pub fn active_envs(&self) -> Vec<String> {
        if self.run.envs.is_empty() {
            sipe_core::sim::benchmark_env_ids().iter().map(|s| s.to_string()).collect()
        } else {
            self.run.envs.clone()
        }
    }

    /// Estimators this run covers: the configured list, or all six.
    pub fn active_estimators(&self) -> Vec<EstimatorKind> {
        if self.run.estimators.is_empty() {
            EstimatorKind::ALL.to_vec()
        } else {
            self.run.estimators.clone()
        }
    }

    /// Which dataset split calibration reads, fixed by the profile.
    pub fn calibration_split(&self) -> crate::dataset::Split {
        match self.run.profile {
            Profile::Tuning => crate::dataset::Split::Validation,
            Profile::Benchmark => crate::dataset::Split::Reference,
        }
    }

    pub fn n_reference_for(&self, env_id: &str) -> usize {
        self.envs
            .get(env_id)
            .and_then(|e| e.n_reference)
            .unwrap_or(self.run.n_reference)
    }

    pub fn n_train_for(&self, env_id: &str) -> usize {
        self.envs
            .get(env_id)
            .and_then(|e| e.n_train)
            .unwrap_or(self.run.n_train)
    }

    pub fn horizon_for(&self, env_id: &str) -> Result<usize> {
        if let Some(h) = self.envs.get(env_id).and_then(|e| e.horizon) {
            if h == 0 {
                return Err(CoreError::invalid("env horizon", "must be at least 1"));
            }
            return Ok(h);
        }
        Ok(sipe_core::sim::env_spec(env_id)?.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_cover_everything() {
        let cfg = BenchConfig::parse("").unwrap();
        assert_eq!(cfg.run.seeds, 3);
        assert_eq!(cfg.active_estimators().len(), 6);
        assert_eq!(
            cfg.active_envs(),
            sipe_core::sim::benchmark_env_ids()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        );
        assert_eq!(cfg.calibration_split(), crate::dataset::Split::Reference);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        assert!(BenchConfig::parse("[run]\nseedz = 3\n").is_err());
        assert!(BenchConfig::parse("[estimator.regression]\nepoch = 5\n").is_err());
        assert!(BenchConfig::parse("[env.pendulum]\nhorizonn = 5\n").is_err());
        assert!(BenchConfig::parse("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn unknown_env_id_rejected() {
        assert!(BenchConfig::parse("[env.pendulem]\nhorizon = 50\n").is_err());
        assert!(BenchConfig::parse("[run]\nenvs = [\"not-an-env\"]\n").is_err());
    }

    #[test]
    fn learned_rewards_restricted() {
        let ok = "[run]\nreward_mode = \"learned\"\nestimators = [\"simopt\", \"adr\"]\n";
        assert!(BenchConfig::parse(ok).is_ok());
        let bad = "[run]\nreward_mode = \"learned\"\nestimators = [\"regression\"]\n";
        let err = BenchConfig::parse(bad).unwrap_err().to_string();
        assert!(err.contains("regression"), "{err}");
    }

    #[test]
    fn tuning_profile_restricted_to_designated_envs() {
        let ok = "[run]\nprofile = \"tuning\"\nenvs = [\"pendulum\", \"bouncing-ball\"]\n";
        let cfg = BenchConfig::parse(ok).unwrap();
        assert_eq!(cfg.calibration_split(), crate::dataset::Split::Validation);
        let bad = "[run]\nprofile = \"tuning\"\nenvs = [\"pendulum\", \"spring-damper\"]\n";
        let err = BenchConfig::parse(bad).unwrap_err().to_string();
        assert!(err.contains("spring-damper"), "{err}");
    }

    #[test]
    fn estimator_sections_override_defaults() {
        let cfg = BenchConfig::parse("[estimator.bayesopt]\nkappa = 5.0\n").unwrap();
        assert_eq!(cfg.estimators.bayesopt.kappa, 5.0);
        assert_eq!(cfg.estimators.bayesopt.xi, 0.0);
    }
}
