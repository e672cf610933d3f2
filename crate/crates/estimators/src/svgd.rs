//! Stein variational update for a particle set.
//!
//! One step moves every particle along a kernel-smoothed gradient plus a
//! repulsive term:
//!
//!   phi_i += (step / M) * sum_j [ k(phi_j, phi_i) g_j + grad_{phi_j} k(phi_j, phi_i) ]
//!
//! with the squared-exponential kernel k(a, b) = exp(-|a-b|^2 / (2 h^2)).
//! With a single particle the kernel term is 1 and the repulsion vanishes, so
//! the update reduces to plain gradient ascent.

use sipe_core::{CoreError, Result};

/// Kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance, floored at 1e-3. Falls back to 1.0 when
    /// there are no pairs.
    Median,
    Fixed(f64),
}

const MEDIAN_FLOOR: f64 = 1e-3;

/// Exactly coincident particles see zero repulsion and identical smoothed
/// gradients, so no update can separate them. A deterministic index-dependent
/// nudge of this size breaks the tie before the step.
pub const COINCIDENCE_NUDGE: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pairwise Euclidean distances.
pub fn median_bandwidth(particles: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    for i in 0..particles.len() {
        for j in (i + 1)..particles.len() {
            dists.push(sq_dist(&particles[i], &particles[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let med = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    med.max(MEDIAN_FLOOR)
}

/// One Stein variational step. `grads[j]` is the ascent gradient at particle
/// `j`. Returns the new positions; inputs are untouched.
pub fn svgd_step(
    particles: &[Vec<f64>],
    grads: &[Vec<f64>],
    step: f64,
    bandwidth: Bandwidth,
) -> Result<Vec<Vec<f64>>> {
    if particles.is_empty() {
        return Err(CoreError::EmptyInput("particle set".into()));
    }
    if particles.len() != grads.len() {
        return Err(CoreError::shape(
            "svgd gradients",
            format!("{} rows", particles.len()),
            format!("{} rows", grads.len()),
        ));
    }
    let dim = particles[0].len();
    for (p, g) in particles.iter().zip(grads) {
        if p.len() != dim || g.len() != dim {
            return Err(CoreError::shape("svgd particle dim", dim.to_string(), p.len().max(g.len()).to_string()));
        }
        if p.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("svgd input".into()));
        }
    }
    if !step.is_finite() {
        return Err(CoreError::NonFinite("svgd step size".into()));
    }
    if let Bandwidth::Fixed(h) = bandwidth {
        if !h.is_finite() || h <= 0.0 {
            return Err(CoreError::invalid("bandwidth", format!("{h} must be positive")));
        }
    }

    // break exact coincidences deterministically
    let mut pts: Vec<Vec<f64>> = particles.to_vec();
    let m_count = pts.len();
    for i in 0..m_count {
        for j in (i + 1)..m_count {
            if pts[i] == pts[j] {
                for (d, v) in pts[j].iter_mut().enumerate() {
                    *v += COINCIDENCE_NUDGE * (1.0 + (j + d) as f64 / m_count as f64);
                }
            }
        }
    }

    let h = match bandwidth {
        Bandwidth::Median => median_bandwidth(&pts),
        Bandwidth::Fixed(h) => h,
    };
    let h2 = h * h;
    let m = pts.len() as f64;

    let mut out = pts.clone();
    for i in 0..pts.len() {
        let mut update = vec![0.0; dim];
        for j in 0..pts.len() {
            let k = (-sq_dist(&pts[j], &pts[i]) / (2.0 * h2)).exp();
            for d in 0..dim {
                // kernel-smoothed gradient plus repulsion grad_{phi_j} k
                update[d] += k * grads[j][d] + (pts[i][d] - pts[j][d]) / h2 * k;
            }
        }
        for d in 0..dim {
            out[i][d] = pts[i][d] + step / m * update[d];
        }
    }
    Ok(out)
}
