//! Distribution-fitting calibration: sample parameter particles from a
//! diagonal Gaussian, score them against the references, reweight with the
//! relative-entropy weights, and refit mean and variance. The KL trust
//! region keeps single lucky particles from collapsing the distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sipe_core::rng::{mix, rng, seed_for};
use sipe_core::{CoreError, ParamVector, Result};

use crate::cost::CalibTarget;
use crate::estimate::Estimate;
use crate::reps::reps_weights;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptConfig {
    pub iterations: usize,
    pub particles: usize,
    pub epsilon: f64,
    pub init_var: f64,
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for SimOptConfig {
    fn default() -> Self {
        Self {
            iterations: 12,
            particles: 6,
            epsilon: 0.5,
            init_var: 0.2,
            var_floor: 1e-4,
            seed: 0,
        }
    }
}

/// Diagonal Gaussian over normalized parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptDist {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl SimOptDist {
    pub fn sample(&self, r: &mut ChaCha8Rng) -> Result<ParamVector> {
        let v: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.var)
            .map(|(m, var)| m + var.sqrt() * crate::gaussian(r))
            .collect();
        ParamVector::clamped(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptRun {
    pub dist: SimOptDist,
    pub particles: Vec<ParamVector>,
    pub costs: Vec<f64>,
    /// (mean cost of sampled particles, eta) per iteration.
    pub trace: Vec<(f64, f64)>,
}

impl SimOptRun {
    pub fn estimate(&self) -> Estimate {
        Estimate::Particles { particles: self.particles.clone(), costs: self.costs.clone() }
    }
}

/// One reweighted refit from scored particles. Exposed for direct testing.
pub fn simopt_update(
    dist: &SimOptDist,
    particles: &[ParamVector],
    costs: &[f64],
    epsilon: f64,
    var_floor: f64,
) -> Result<(SimOptDist, f64)> {
    if particles.is_empty() || particles.len() != costs.len() {
        return Err(CoreError::shape(
            "simopt particles vs costs",
            particles.len(),
            costs.len(),
        ));
    }
    let dim = dist.mean.len();
    let (w, eta) = reps_weights(costs, epsilon)?;
    let mut mean = vec![0.0; dim];
    for (wi, p) in w.iter().zip(particles) {
        for d in 0..dim {
            mean[d] += wi * p.as_slice()[d];
        }
    }
    let mut var = vec![0.0; dim];
    for (wi, p) in w.iter().zip(particles) {
        for d in 0..dim {
            let diff = p.as_slice()[d] - mean[d];
            var[d] += wi * diff * diff;
        }
    }
    for v in var.iter_mut() {
        *v = v.max(var_floor);
    }
    Ok((SimOptDist { mean, var }, eta))
}

/// Full calibration loop. In learned-reward mode the discriminator trains on
/// each iteration's particles before they are scored the next time around.
/// Budget exhaustion ends the loop early with the particles scored so far.
pub fn simopt_calibrate(target: &mut CalibTarget, cfg: &SimOptConfig) -> Result<SimOptRun> {
    if cfg.iterations == 0 || cfg.particles == 0 {
        return Err(CoreError::invalid(
            "simopt config",
            "iterations and particles must be positive",
        ));
    }
    let dim = target.param_dim()?;
    let mut init_rng = rng(seed_for(cfg.seed, "simopt-init"));
    let dist_init = SimOptDist {
        // biased start away from the cube center so calibration has to move
        mean: (0..dim).map(|_| init_rng.gen_range(0.0..0.5)).collect(),
        var: vec![cfg.init_var; dim],
    };

    let mut dist = dist_init;
    let mut last_particles: Vec<ParamVector> = Vec::new();
    let mut last_costs: Vec<f64> = Vec::new();
    let mut trace = Vec::new();

    'outer: for iter in 0..cfg.iterations {
        let mut particles = Vec::with_capacity(cfg.particles);
        let mut costs = Vec::with_capacity(cfg.particles);
        for p in 0..cfg.particles {
            let mut r = rng(mix(seed_for(cfg.seed, "simopt-sample"), (iter * cfg.particles + p) as u64));
            let theta = dist.sample(&mut r)?;
            match target.cost(&theta) {
                Ok(c) => {
                    particles.push(theta);
                    costs.push(c);
                }
                Err(CoreError::BudgetExhausted { .. }) => break 'outer,
                Err(e) => return Err(e),
            }
        }
        let (new_dist, eta) =
            simopt_update(&dist, &particles, &costs, cfg.epsilon, cfg.var_floor)?;
        trace.push((costs.iter().sum::<f64>() / costs.len() as f64, eta));
        dist = new_dist;
        last_particles = particles;
        last_costs = costs;

        // discriminator update in learned mode; ignore exhaustion here, the
        // next scoring pass will stop the loop
        match target.observe_iteration(&last_particles) {
            Ok(_) => {}
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }

    if last_particles.is_empty() {
        return Err(CoreError::BudgetExhausted {
            used: target.budget().used(),
            cap: target.budget().cap(),
            requested: target.steps_per_cost(),
        });
    }
    Ok(SimOptRun { dist, particles: last_particles, costs: last_costs, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sipe_core::sim::{make_env, SimBudget};
    use sipe_core::TrajectorySource;

    use crate::cost::{RefTraj, RewardMode};

    fn target_for<'a>(
        truth: &ParamVector,
        budget: &'a SimBudget,
        seed: u64,
    ) -> CalibTarget<'a> {
        let model = make_env("pendulum", truth, seed).unwrap();
        let mut r = rng(seed);
        let refs: Vec<RefTraj> = (0..3)
            .map(|i| {
                let start = model.sample_start(i);
                let actions: Vec<Vec<f64>> =
                    (0..50).map(|_| vec![r.gen_range(-2.0..2.0)]).collect();
                RefTraj::scripted(
                    model
                        .rollout_actions(&start, &actions)
                        .unwrap()
                        .with_source(TrajectorySource::Reference),
                )
            })
            .collect();
        CalibTarget::new("pendulum", refs, budget, RewardMode::Mse, seed).unwrap()
    }

    #[test]
    fn update_pulls_mean_toward_cheap_particles() {
        let dist = SimOptDist { mean: vec![0.5], var: vec![0.2] };
        let particles = vec![
            ParamVector::new(vec![0.2]).unwrap(),
            ParamVector::new(vec![0.8]).unwrap(),
        ];
        let (next, _) = simopt_update(&dist, &particles, &[0.1, 5.0], 0.5, 1e-4).unwrap();
        assert!(next.mean[0] < 0.5, "mean {} did not move toward the cheap particle", next.mean[0]);
        assert!(next.var[0] >= 1e-4);
    }

    #[test]
    fn variance_floor_holds() {
        let dist = SimOptDist { mean: vec![0.5], var: vec![0.2] };
        let particles = vec![ParamVector::new(vec![0.4]).unwrap(); 4];
        let (next, _) = simopt_update(&dist, &particles, &[1.0; 4], 0.5, 1e-4).unwrap();
        assert_eq!(next.var[0], 1e-4);
    }

    #[test]
    fn calibrates_pendulum() {
        let truth = ParamVector::new(vec![0.6, 0.4]).unwrap();
        let budget = SimBudget::unlimited();
        let mut target = target_for(&truth, &budget, 3);
        let cfg = SimOptConfig { seed: 3, ..SimOptConfig::default() };
        let run = simopt_calibrate(&mut target, &cfg).unwrap();
        let best = run.estimate().best_theta().unwrap();
        let err: f64 = best
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(err < 0.15, "best particle {best:?} vs truth {truth:?}");
        assert_eq!(run.trace.len(), 12);
    }

    #[test]
    fn budget_cut_returns_last_complete_iteration() {
        let truth = ParamVector::new(vec![0.5, 0.5]).unwrap();
        // 3 refs x 50 steps = 150 per cost; 6 particles = 900 per iteration
        let budget = SimBudget::new(900 * 2 + 100);
        let mut target = target_for(&truth, &budget, 5);
        let cfg = SimOptConfig { seed: 5, ..SimOptConfig::default() };
        let run = simopt_calibrate(&mut target, &cfg).unwrap();
        assert_eq!(run.particles.len(), 6);
        assert!(run.trace.len() <= 2);
        assert!(budget.used() <= budget.cap());
    }

    #[test]
    fn deterministic_run() {
        let truth = ParamVector::new(vec![0.3, 0.7]).unwrap();
        let budget = SimBudget::unlimited();
        let cfg = SimOptConfig { iterations: 4, seed: 9, ..SimOptConfig::default() };
        let mut t1 = target_for(&truth, &budget, 2);
        let mut t2 = target_for(&truth, &budget, 2);
        let r1 = simopt_calibrate(&mut t1, &cfg).unwrap();
        let r2 = simopt_calibrate(&mut t2, &cfg).unwrap();
        assert_eq!(r1.dist.mean, r2.dist.mean);
        assert_eq!(r1.costs, r2.costs);
    }
}
