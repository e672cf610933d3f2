//! Bayesian optimization of the calibration cost.
//!
//! A Gaussian process is fit to centered cost observations over the unit
//! cube; each round scores a fresh batch of uniform random candidates with an
//! upper confidence bound on improvement and evaluates the winner. Since cost
//! is minimized the acquisition is -mu + kappa * sigma.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sipe_core::gp::GpState;
use sipe_core::rng::{rng, seed_for};
use sipe_core::{CoreError, ParamVector, Result};

use crate::cost::CalibTarget;
use crate::estimate::Estimate;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesOptConfig {
    /// Total cost evaluations, initial random probes included.
    pub proposals: usize,
    pub init_random: usize,
    pub candidates_per_round: usize,
    pub kappa: f64,
    /// Additive exploration offset in the acquisition; zero by default.
    pub xi: f64,
    pub length_scale: f64,
    pub signal_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for BayesOptConfig {
    fn default() -> Self {
        Self {
            proposals: 120,
            init_random: 8,
            candidates_per_round: 512,
            kappa: 2.5,
            xi: 0.0,
            length_scale: 0.2,
            signal_std: 1.0,
            noise_std: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesOptRun {
    pub best_theta: ParamVector,
    pub best_cost: f64,
    /// Every evaluated (proposal, cost) pair in order.
    pub history: Vec<(ParamVector, f64)>,
    /// Best cost seen so far after each evaluation; never increases.
    pub incumbent_curve: Vec<f64>,
}

impl BayesOptRun {
    pub fn estimate(&self) -> Estimate {
        Estimate::point(self.best_theta.clone())
    }
}

fn uniform_theta(r: &mut impl Rng, dim: usize) -> ParamVector {
    ParamVector::new((0..dim).map(|_| r.gen_range(0.0..=1.0)).collect())
        .expect("uniform draw stays in the cube")
}

/// Run Bayesian optimization against the target. Stops early when the budget
/// cannot cover another evaluation, returning the incumbent found so far.
pub fn bayesopt_calibrate(target: &CalibTarget, cfg: &BayesOptConfig) -> Result<BayesOptRun> {
    if cfg.proposals == 0 || cfg.init_random == 0 || cfg.init_random > cfg.proposals {
        return Err(CoreError::invalid(
            "bayesopt config",
            format!("need 1 <= init_random ({}) <= proposals ({})", cfg.init_random, cfg.proposals),
        ));
    }
    if cfg.candidates_per_round == 0 {
        return Err(CoreError::EmptyInput("acquisition candidates".into()));
    }
    let dim = target.param_dim()?;
    let mut r = rng(seed_for(cfg.seed, "bayesopt"));
    let mut history: Vec<(ParamVector, f64)> = Vec::new();
    let mut incumbent_curve = Vec::new();
    let mut best_cost = f64::INFINITY;
    let mut best_theta = ParamVector::new(vec![0.5; dim])?;

    let mut record = |theta: ParamVector,
                      cost: f64,
                      history: &mut Vec<(ParamVector, f64)>,
                      curve: &mut Vec<f64>| {
        if cost < best_cost {
            best_cost = cost;
            best_theta = theta.clone();
        }
        history.push((theta, cost));
        curve.push(best_cost);
    };

    for k in 0..cfg.proposals {
        let theta = if k < cfg.init_random {
            uniform_theta(&mut r, dim)
        } else {
            // center observed costs, fit the surrogate, score candidates
            let mean_y = history.iter().map(|(_, c)| c).sum::<f64>() / history.len() as f64;
            let mut gp = GpState::new(cfg.length_scale, cfg.signal_std, cfg.noise_std)?;
            for (th, c) in &history {
                gp.add_observation(th.as_slice(), c - mean_y)?;
            }
            gp.fit()?;
            let mut best_acq = f64::NEG_INFINITY;
            let mut pick = uniform_theta(&mut r, dim);
            for _ in 0..cfg.candidates_per_round {
                let cand = uniform_theta(&mut r, dim);
                let (mu, var) = gp.posterior(cand.as_slice())?;
                let acq = -mu + cfg.kappa * var.sqrt() + cfg.xi;
                if acq > best_acq {
                    best_acq = acq;
                    pick = cand;
                }
            }
            pick
        };
        match target.cost(&theta) {
            Ok(c) => record(theta, c, &mut history, &mut incumbent_curve),
            Err(CoreError::BudgetExhausted { .. }) if !history.is_empty() => break,
            Err(e) => return Err(e),
        }
    }

    Ok(BayesOptRun { best_theta, best_cost, history, incumbent_curve })
}
