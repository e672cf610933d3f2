//! Diagonal Gaussian mixture densities: the posterior representation used by
//! the likelihood-free estimator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::space::ParamVector;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mixture of diagonal Gaussians over the normalized parameter cube.
/// Weights are validated to be non-negative and to sum to one (within 1e-6;
/// they are renormalized exactly on construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    components: Vec<MixtureComponent>,
}

impl MixtureDensity {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(CoreError::EmptyInput("mixture components".into()));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(CoreError::EmptyInput("mixture mean".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.std.len() != dim {
                return Err(CoreError::shape(format!("component {k}"), dim, c.mean.len()));
            }
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(CoreError::invalid(
                    format!("weight of component {k}"),
                    format!("{}", c.weight),
                ));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite(format!("mean of component {k}")));
            }
            if c.std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(CoreError::invalid(
                    format!("std of component {k}"),
                    "must be finite and positive",
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(CoreError::invalid(
                "mixture weights",
                format!("sum {total} not within 1e-6 of 1"),
            ));
        }
        let mut components = components;
        for c in &mut components {
            c.weight /= total;
        }
        Ok(MixtureDensity { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn log_pdf(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(CoreError::shape("mixture query", self.dim(), theta.len()));
        }
        // log sum exp over component log densities
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let mut lp = c.weight.ln();
                for i in 0..theta.len() {
                    let z = (theta[i] - c.mean[i]) / c.std[i];
                    lp += -0.5 * z * z - c.std[i].ln() - 0.5 * LN_2PI;
                }
                lp
            })
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln())
    }

    /// Negative log likelihood of one parameter vector.
    pub fn nll(&self, theta: &ParamVector) -> Result<f64> {
        Ok(-self.log_pdf(theta.as_slice())?)
    }

    /// Ancestral sample: pick a component by weight, then draw each dimension,
    /// clamped into the unit cube.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ParamVector> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u <= acc {
                idx = k;
                break;
            }
        }
        let c = &self.components[idx];
        let mut theta = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            theta.push(c.mean[i] + c.std[i] * gaussian(rng));
        }
        ParamVector::clamped(theta)
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for c in &self.components {
            for i in 0..m.len() {
                m[i] += c.weight * c.mean[i];
            }
        }
        m
    }

    /// Full mixture covariance (law of total variance).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let m = self.mean();
        let mut cov = vec![vec![0.0; d]; d];
        for c in &self.components {
            for i in 0..d {
                for j in 0..d {
                    let within = if i == j { c.std[i] * c.std[i] } else { 0.0 };
                    cov[i][j] +=
                        c.weight * (within + (c.mean[i] - m[i]) * (c.mean[j] - m[j]));
                }
            }
        }
        cov
    }

    /// Std of the mixture projected onto a (normalized) direction.
    pub fn directional_std(&self, dir: &[f64]) -> Result<f64> {
        if dir.len() != self.dim() {
            return Err(CoreError::shape("direction", self.dim(), dir.len()));
        }
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CoreError::invalid("direction", "zero vector"));
        }
        let cov = self.covariance();
        let mut q = 0.0;
        for i in 0..dir.len() {
            for j in 0..dir.len() {
                q += dir[i] * cov[i][j] * dir[j];
            }
        }
        Ok((q / (norm * norm)).max(0.0).sqrt())
    }
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of rejection behaviour.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;

    fn two_component() -> MixtureDensity {
        MixtureDensity::new(vec![
            MixtureComponent {
                weight: 0.3,
                mean: vec![0.2, 0.8],
                std: vec![0.05, 0.1],
            },
            MixtureComponent {
                weight: 0.7,
                mean: vec![0.6, 0.4],
                std: vec![0.2, 0.05],
            },
        ])
        .unwrap()
    }

    /// Manual oracle: sum the component densities with plain arithmetic.
    fn pdf_oracle(m: &MixtureDensity, theta: &[f64]) -> f64 {
        m.components()
            .iter()
            .map(|c| {
                let mut p = c.weight;
                for i in 0..theta.len() {
                    let z = (theta[i] - c.mean[i]) / c.std[i];
                    p *= (-0.5 * z * z).exp() / (c.std[i] * (2.0 * std::f64::consts::PI).sqrt());
                }
                p
            })
            .sum()
    }

    #[test]
    fn log_pdf_matches_manual_sum() {
        let m = two_component();
        for theta in [[0.2, 0.8], [0.6, 0.4], [0.5, 0.5], [0.0, 1.0]] {
            let got = m.log_pdf(&theta).unwrap();
            let want = pdf_oracle(&m, &theta).ln();
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn nll_is_negative_log_pdf() {
        let m = two_component();
        let t = ParamVector::new(vec![0.5, 0.5]).unwrap();
        let nll = m.nll(&t).unwrap();
        assert!((nll + m.log_pdf(&[0.5, 0.5]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sampling_respects_weights_and_cube() {
        let m = two_component();
        let mut r = rng(5);
        let mut near_second = 0usize;
        let n = 4000;
        for _ in 0..n {
            let s = m.sample(&mut r).unwrap();
            let v = s.as_slice();
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            if (v[0] - 0.6).abs() < 0.45 && (v[1] - 0.4).abs() < 0.3 {
                near_second += 1;
            }
        }
        // multinomial: weight 0.7 with n = 4000 has std ~ 0.0072; a window
        // this wide catches essentially all of component 2's mass
        let frac = near_second as f64 / n as f64;
        assert!((frac - 0.7).abs() < 0.08, "frac {frac}");
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = MixtureDensity::new(vec![MixtureComponent {
            weight: 0.5,
            mean: vec![0.5],
            std: vec![0.1],
        }])
        .unwrap_err();
        assert!(matches!(err, CoreError::Invalid { .. }));
    }

    #[test]
    fn covariance_spreads_between_components() {
        let m = MixtureDensity::new(vec![
            MixtureComponent {
                weight: 0.5,
                mean: vec![0.0, 0.0],
                std: vec![0.01, 0.01],
            },
            MixtureComponent {
                weight: 0.5,
                mean: vec![1.0, 0.0],
                std: vec![0.01, 0.01],
            },
        ])
        .unwrap();
        // variance along x dominated by the mean separation: 0.25
        let sx = m.directional_std(&[1.0, 0.0]).unwrap();
        let sy = m.directional_std(&[0.0, 1.0]).unwrap();
        assert!((sx - 0.5).abs() < 1e-3, "{sx}");
        assert!(sy < 0.02, "{sy}");
    }
}
