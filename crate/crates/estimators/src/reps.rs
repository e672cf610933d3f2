//! Relative-entropy weight computation for particle reweighting.
//!
//! Given per-particle costs `c` and a KL budget `epsilon`, the weights are
//! `w_i proportional to exp(-c_i / eta*)` where `eta*` minimizes the dual
//!
//!   g(eta) = eta * epsilon + eta * log( (1/M) sum_i exp(-c_i / eta) ).
//!
//! The dual is convex in `eta`; a bracketed golden-section search over
//! log(eta) finds the minimizer. At the optimum KL(w || uniform) <= epsilon
//! (equality when the constraint is active).

use sipe_core::{CoreError, Result};

/// Search bracket for the temperature.
pub const ETA_MIN: f64 = 1e-6;
pub const ETA_MAX: f64 = 1e6;

const GOLDEN_ITERS: usize = 160;

/// The REPS dual objective. Exposed so tests can grid-search it as an
/// independent oracle.
pub fn reps_dual(costs: &[f64], eta: f64, epsilon: f64) -> f64 {
    let cmin = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_exp: f64 =
        costs.iter().map(|c| (-(c - cmin) / eta).exp()).sum::<f64>() / costs.len() as f64;
    eta * epsilon - cmin + eta * mean_exp.ln()
}

/// Weights at a fixed temperature: softmax(-c / eta).
pub fn weights_at(costs: &[f64], eta: f64) -> Vec<f64> {
    let cmin = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let unnorm: Vec<f64> = costs.iter().map(|c| (-(c - cmin) / eta).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|u| u / z).collect()
}

/// KL divergence of `w` from the uniform distribution over its support size.
pub fn kl_from_uniform(w: &[f64]) -> f64 {
    let m = w.len() as f64;
    w.iter()
        .filter(|&&wi| wi > 0.0)
        .map(|&wi| wi * (wi * m).ln())
        .sum()
}

/// Solve for the relative-entropy weights. Returns `(weights, eta_star)`.
///
/// All-equal costs short-circuit to uniform weights with `eta` pinned at the
/// bracket's upper end; that is a documented fixed point, not an error.
pub fn reps_weights(costs: &[f64], epsilon: f64) -> Result<(Vec<f64>, f64)> {
    if costs.is_empty() {
        return Err(CoreError::EmptyInput("particle costs".into()));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(CoreError::NonFinite("particle cost".into()));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(CoreError::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    let cmin = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if cmax - cmin < 1e-12 {
        let m = costs.len();
        return Ok((vec![1.0 / m as f64; m], ETA_MAX));
    }

    // golden-section over log(eta); convexity in eta survives the monotone
    // reparameterization, so unimodality holds
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (ETA_MIN.ln(), ETA_MAX.ln());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = reps_dual(costs, x1.exp(), epsilon);
    let mut f2 = reps_dual(costs, x2.exp(), epsilon);
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = reps_dual(costs, x1.exp(), epsilon);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = reps_dual(costs, x2.exp(), epsilon);
        }
    }
    let eta = (0.5 * (lo + hi)).exp();
    Ok((weights_at(costs, eta), eta))
}
