//! Particle-based calibration that keeps a spread-out population.
//!
//! Each particle carries a reward (negative cost, optionally learned from a
//! discriminator). Gradients come from antithetic evolution-strategy
//! perturbations, and the population moves with a Stein variational step so
//! the kernel repulsion maintains diversity instead of collapsing every
//! particle onto one optimum. On environments where many parameter settings
//! explain the data equally well, the population ends up covering them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sipe_core::rng::{mix, rng, seed_for};
use sipe_core::{CoreError, ParamVector, Result};

use crate::cost::CalibTarget;
use crate::estimate::Estimate;
use crate::svgd::{svgd_step, Bandwidth};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdrConfig {
    pub iterations: usize,
    pub particles: usize,
    /// Antithetic perturbation pairs per particle per iteration.
    pub pairs: usize,
    /// Perturbation scale in normalized parameter space.
    pub sigma: f64,
    pub step_size: f64,
    /// Reward scale: gradients are of -cost / temperature.
    pub temperature: f64,
    /// None selects the median heuristic each step.
    pub fixed_bandwidth: Option<f64>,
    pub seed: u64,
}

impl Default for AdrConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            particles: 10,
            pairs: 8,
            sigma: 0.05,
            step_size: 0.1,
            temperature: 1.0,
            fixed_bandwidth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdrRun {
    pub particles: Vec<ParamVector>,
    /// Full-reference costs when the budget allows; otherwise the cheapest
    /// evaluation that still fit, down to the last completed scoring pass.
    pub costs: Vec<f64>,
    /// Mean particle cost per completed iteration.
    pub trace: Vec<f64>,
}

impl AdrRun {
    pub fn estimate(&self) -> Estimate {
        Estimate::Particles { particles: self.particles.clone(), costs: self.costs.clone() }
    }
}

/// Cost assigned to a perturbation whose simulation blew up; the particle
/// itself is retained.
const FAILURE_COST: f64 = 1e3;
/// Below this cost spread the reward is treated as flat.
const SCALE_FLOOR: f64 = 1e-12;

/// One antithetic perturbation pair evaluated at phi +/- sigma*eps.
struct PairEval {
    eps: Vec<f64>,
    c_up: f64,
    c_dn: f64,
}

fn guarded_cost(target: &CalibTarget, theta: Vec<f64>, rotation: u64) -> Result<f64> {
    match target.cost_single(&ParamVector::clamped(theta)?, rotation) {
        Ok(c) => Ok(c),
        Err(CoreError::NonFinite(_)) => Ok(FAILURE_COST),
        Err(e) => Err(e),
    }
}

/// Evaluate the antithetic perturbation costs for one particle. Evaluations
/// rotate through single references to keep the step budget low; both sides
/// of a pair share one reference so the difference isolates the parameters.
fn pair_evals(
    target: &CalibTarget,
    phi: &[f64],
    cfg: &AdrConfig,
    iter: usize,
    particle: usize,
) -> Result<Vec<PairEval>> {
    let dim = phi.len();
    let mut out = Vec::with_capacity(cfg.pairs);
    for pair in 0..cfg.pairs {
        let mut r = rng(mix(
            seed_for(cfg.seed, "adr-es"),
            ((iter * cfg.particles + particle) * cfg.pairs + pair) as u64,
        ));
        let eps: Vec<f64> = (0..dim).map(|_| crate::gaussian(&mut r)).collect();
        let up: Vec<f64> = phi.iter().zip(&eps).map(|(p, e)| p + cfg.sigma * e).collect();
        let dn: Vec<f64> = phi.iter().zip(&eps).map(|(p, e)| p - cfg.sigma * e).collect();
        let rotation = (iter * cfg.particles * cfg.pairs + particle * cfg.pairs + pair) as u64;
        let c_up = guarded_cost(target, up, rotation)?;
        let c_dn = guarded_cost(target, dn, rotation)?;
        out.push(PairEval { eps, c_up, c_dn });
    }
    Ok(out)
}

/// Score gradients for the whole population from antithetic cost
/// differences, standardized by the standard deviation of every cost drawn
/// this iteration. The standardization makes the update independent of the
/// environment's cost units: the result estimates the ascent gradient of
/// -cost measured in population-standard-deviation units. Temperature
/// rescales that standardized reward. A flat reward (spread below floor)
/// yields zero gradients, leaving the particles to move under kernel
/// repulsion alone.
fn es_gradients(evals: &[Vec<PairEval>], cfg: &AdrConfig, dim: usize) -> Vec<Vec<f64>> {
    let costs: Vec<f64> = evals
        .iter()
        .flat_map(|pes| pes.iter().flat_map(|p| [p.c_up, p.c_dn]))
        .collect();
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < SCALE_FLOOR {
        return evals.iter().map(|_| vec![0.0; dim]).collect();
    }
    evals
        .iter()
        .map(|pes| {
            let mut g = vec![0.0; dim];
            for pe in pes {
                let u = (pe.c_dn - pe.c_up) / (std * cfg.temperature);
                for d in 0..dim {
                    g[d] += u / (2.0 * cfg.sigma) * pe.eps[d] / pes.len() as f64;
                }
            }
            g
        })
        .collect()
}

/// Run the particle calibration. Returns the final population with full
/// per-particle costs. Budget exhaustion ends the loop early; the particles
/// are then scored with whatever budget remains, falling back to the cheap
/// single-reference cost if the full evaluation no longer fits.
pub fn adr_calibrate(target: &mut CalibTarget, cfg: &AdrConfig) -> Result<AdrRun> {
    if cfg.iterations == 0 || cfg.particles == 0 || cfg.pairs == 0 {
        return Err(CoreError::invalid(
            "adr config",
            "iterations, particles, and pairs must be positive",
        ));
    }
    if cfg.sigma <= 0.0 || cfg.temperature <= 0.0 || cfg.step_size <= 0.0 {
        return Err(CoreError::invalid(
            "adr config",
            "sigma, temperature, and step size must be positive",
        ));
    }
    let dim = target.param_dim()?;
    let mut init_rng = rng(seed_for(cfg.seed, "adr-init"));
    let mut particles: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| (0..dim).map(|_| init_rng.gen_range(0.0..=1.0)).collect())
        .collect();
    let mut trace = Vec::new();
    // per-particle costs from the last completed scoring pass; keeps the run
    // reportable when the budget dies before the final evaluation
    let mut last_scores: Option<Vec<f64>> = None;

    'outer: for iter in 0..cfg.iterations {
        let mut evals = Vec::with_capacity(cfg.particles);
        for (p, phi) in particles.iter().enumerate() {
            match pair_evals(target, phi, cfg, iter, p) {
                Ok(pe) => evals.push(pe),
                Err(CoreError::BudgetExhausted { .. }) => break 'outer,
                Err(e) => return Err(e),
            }
        }
        let grads = es_gradients(&evals, cfg, dim);
        let bandwidth = match cfg.fixed_bandwidth {
            Some(h) => Bandwidth::Fixed(h),
            None => Bandwidth::Median,
        };
        let moved = svgd_step(&particles, &grads, cfg.step_size, bandwidth)?;
        particles = moved
            .into_iter()
            .map(|p| p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .collect();

        // iteration diagnostics from the cheap single-reference cost; the
        // same reference scores every particle so the pass is comparable
        let mut pass = Vec::with_capacity(cfg.particles);
        for phi in particles.iter() {
            match target.cost_single(&ParamVector::new(phi.clone())?, iter as u64) {
                Ok(c) => pass.push(c),
                Err(CoreError::BudgetExhausted { .. }) => break 'outer,
                Err(e) => return Err(e),
            }
        }
        trace.push(pass.iter().sum::<f64>() / pass.len() as f64);
        last_scores = Some(pass);

        let thetas: Vec<ParamVector> = particles
            .iter()
            .map(|p| ParamVector::new(p.clone()))
            .collect::<Result<_>>()?;
        match target.observe_iteration(&thetas) {
            Ok(_) => {}
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }

    let thetas: Vec<ParamVector> = particles
        .iter()
        .map(|p| ParamVector::new(p.clone()))
        .collect::<Result<_>>()?;
    let mut costs = Vec::with_capacity(thetas.len());
    for (i, th) in thetas.iter().enumerate() {
        let c = match target.cost(th) {
            Ok(c) => c,
            Err(CoreError::BudgetExhausted { .. }) => {
                match target.cost_single(th, i as u64) {
                    Ok(c) => c,
                    Err(CoreError::BudgetExhausted { .. }) => match &last_scores {
                        Some(s) => s[i],
                        None => {
                            return Err(CoreError::invalid(
                                "adr budget",
                                "exhausted before any particle could be scored",
                            ))
                        }
                    },
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };
        costs.push(c);
    }
    Ok(AdrRun { particles: thetas, costs, trace })
}

/// Population spread: max minus min per dimension, averaged over dimensions.
pub fn particle_spread(particles: &[ParamVector]) -> f64 {
    if particles.is_empty() {
        return 0.0;
    }
    let dim = particles[0].dim();
    let mut total = 0.0;
    for d in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in particles {
            lo = lo.min(p.as_slice()[d]);
            hi = hi.max(p.as_slice()[d]);
        }
        total += hi - lo;
    }
    total / dim as f64
}
