//! The common output type of every estimator.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sipe_core::mdn::MixtureDensity;
use sipe_core::{ParamVector, Result};

/// What an estimator hands back: a single point, a set of particles with
/// their final costs, or a full posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimate {
    Point { theta: ParamVector },
    Particles { particles: Vec<ParamVector>, costs: Vec<f64> },
    Posterior { density: MixtureDensity },
}

impl Estimate {
    pub fn point(theta: ParamVector) -> Self {
        Estimate::Point { theta }
    }

    /// Lowest-cost particle; point methods return their point, posteriors
    /// the mean of their heaviest mixture component.
    pub fn best_theta(&self) -> Option<ParamVector> {
        match self {
            Estimate::Point { theta } => Some(theta.clone()),
            Estimate::Particles { particles, costs } => {
                let mut best = 0;
                for i in 1..particles.len() {
                    if costs[i] < costs[best] {
                        best = i;
                    }
                }
                particles.get(best).cloned()
            }
            Estimate::Posterior { density } => {
                let top = density
                    .components()
                    .iter()
                    .max_by(|a, b| a.weight.partial_cmp(&b.weight).unwrap())?;
                ParamVector::clamped(top.mean.clone()).ok()
            }
        }
    }

    /// Unweighted mean of the particles; point methods return their point,
    /// posteriors their mixture mean.
    pub fn mean_theta(&self) -> Option<ParamVector> {
        match self {
            Estimate::Point { theta } => Some(theta.clone()),
            Estimate::Particles { particles, .. } => {
                let n = particles.len();
                if n == 0 {
                    return None;
                }
                let d = particles[0].dim();
                let mut m = vec![0.0; d];
                for p in particles {
                    for (mi, v) in m.iter_mut().zip(p.as_slice()) {
                        *mi += v / n as f64;
                    }
                }
                ParamVector::clamped(m).ok()
            }
            Estimate::Posterior { density } => ParamVector::clamped(density.mean()).ok(),
        }
    }

    /// Draw a parameter setting for one training episode: points return
    /// themselves, particle sets sample uniformly, posteriors sample the
    /// mixture (clamped to the cube).
    pub fn sample_theta(&self, rng: &mut ChaCha8Rng) -> Result<ParamVector> {
        use rand::Rng;
        match self {
            Estimate::Point { theta } => Ok(theta.clone()),
            Estimate::Particles { particles, .. } => {
                let i = rng.gen_range(0..particles.len());
                Ok(particles[i].clone())
            }
            Estimate::Posterior { density } => density.sample(rng),
        }
    }
}
