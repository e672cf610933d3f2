//! Fixed-length trajectory featurization shared by the meta-learner, the
//! likelihood-free posterior, and the discriminator.
//!
//! A trajectory of any horizon maps to: 10 evenly spaced (state, action)
//! pairs (indices `round(linspace(0, H-1, 10))`), followed by the per-dim
//! mean and standard deviation of the states.

use sipe_core::{CoreError, Result, Trajectory};

pub const N_SUBSAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub state_dim: usize,
    pub action_dim: usize,
}

impl FeatureSpec {
    pub fn for_env(env_id: &str) -> Result<Self> {
        let spec = sipe_core::sim::env_spec(env_id)?;
        Ok(FeatureSpec {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
        })
    }

    pub fn len(&self) -> usize {
        N_SUBSAMPLES * (self.state_dim + self.action_dim) + 2 * self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Indices of the subsampled steps: `round(linspace(0, h-1, 10))`.
pub fn subsample_indices(h: usize) -> Vec<usize> {
    assert!(h >= 1);
    (0..N_SUBSAMPLES)
        .map(|k| {
            if N_SUBSAMPLES == 1 {
                0
            } else {
                let t = k as f64 * (h - 1) as f64 / (N_SUBSAMPLES - 1) as f64;
                t.round() as usize
            }
        })
        .collect()
}

/// Featurize one trajectory. Requires horizon >= 1.
pub fn featurize(spec: &FeatureSpec, tau: &Trajectory) -> Result<Vec<f64>> {
    if tau.horizon() == 0 {
        return Err(CoreError::EmptyInput(
            "trajectory with zero actions cannot be featurized".into(),
        ));
    }
    if tau.state_dim() != spec.state_dim {
        return Err(CoreError::shape("feature state dim", spec.state_dim, tau.state_dim()));
    }
    if tau.action_dim() != spec.action_dim {
        return Err(CoreError::shape("feature action dim", spec.action_dim, tau.action_dim()));
    }
    let mut out = Vec::with_capacity(spec.len());
    for idx in subsample_indices(tau.horizon()) {
        out.extend_from_slice(&tau.states()[idx]);
        out.extend_from_slice(&tau.actions()[idx]);
    }
    let n = tau.states().len() as f64;
    for d in 0..spec.state_dim {
        let mean: f64 = tau.states().iter().map(|s| s[d]).sum::<f64>() / n;
        out.push(mean);
    }
    for d in 0..spec.state_dim {
        let mean: f64 = tau.states().iter().map(|s| s[d]).sum::<f64>() / n;
        let var: f64 = tau.states().iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / n;
        out.push(var.sqrt());
    }
    Ok(out)
}

/// Featurize a batch and average, the conditioning vector for posteriors.
pub fn mean_feature(spec: &FeatureSpec, taus: &[Trajectory]) -> Result<Vec<f64>> {
    if taus.is_empty() {
        return Err(CoreError::EmptyInput("trajectories to featurize".into()));
    }
    let mut acc = vec![0.0; spec.len()];
    for tau in taus {
        let f = featurize(spec, tau)?;
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v / taus.len() as f64;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sipe_core::TrajectorySource;

    fn traj(h: usize, state_dim: usize, action_dim: usize) -> Trajectory {
        let states: Vec<Vec<f64>> = (0..=h)
            .map(|t| (0..state_dim).map(|d| (t * 10 + d) as f64).collect())
            .collect();
        let actions: Vec<Vec<f64>> = (0..h)
            .map(|t| (0..action_dim).map(|d| (t as f64) * 0.1 + d as f64).collect())
            .collect();
        Trajectory::new("e", states, actions, TrajectorySource::Simulated).unwrap()
    }

    #[test]
    fn length_is_horizon_independent() {
        let spec = FeatureSpec { state_dim: 2, action_dim: 1 };
        let short = featurize(&spec, &traj(3, 2, 1)).unwrap();
        let long = featurize(&spec, &traj(500, 2, 1)).unwrap();
        assert_eq!(short.len(), spec.len());
        assert_eq!(long.len(), spec.len());
        assert_eq!(spec.len(), 10 * 3 + 4);
    }

    #[test]
    fn horizon_one_repeats_the_single_step()  {
        let spec = FeatureSpec { state_dim: 1, action_dim: 1 };
        let f = featurize(&spec, &traj(1, 1, 1)).unwrap();
        // all ten (s, a) pairs must be step 0
        for k in 0..N_SUBSAMPLES {
            assert_eq!(f[2 * k], 0.0);
            assert_eq!(f[2 * k + 1], 0.0);
        }
    }

    #[test]
    fn indices_cover_first_and_last_step() {
        let idx = subsample_indices(200);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().unwrap(), 199);
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_horizon_errors() {
        let spec = FeatureSpec { state_dim: 2, action_dim: 1 };
        let t = Trajectory::new("e", vec![vec![0.0, 0.0]], vec![], TrajectorySource::Simulated)
            .unwrap();
        assert!(featurize(&spec, &t).is_err());
    }

    #[test]
    fn state_stats_appended() {
        let spec = FeatureSpec { state_dim: 1, action_dim: 1 };
        let t = Trajectory::new(
            "e",
            vec![vec![1.0], vec![3.0]],
            vec![vec![0.0]],
            TrajectorySource::Simulated,
        )
        .unwrap();
        let f = featurize(&spec, &t).unwrap();
        let n = f.len();
        assert!((f[n - 2] - 2.0).abs() < 1e-15, "mean");
        assert!((f[n - 1] - 1.0).abs() < 1e-15, "std");
    }
}
