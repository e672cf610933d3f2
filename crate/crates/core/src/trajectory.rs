//! Trajectories: the common currency between simulators, estimators, and the
//! benchmark harness.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Where a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    /// Target-environment data the estimators try to match.
    Reference,
    /// Produced by a candidate simulation during calibration.
    Simulated,
    /// Generated by a (possibly partially trained) policy.
    Policy,
}

/// A rollout of `horizon` steps: `horizon + 1` states and `horizon` actions,
/// all with uniform dimensions. `states[0]` always equals `start_state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env_id: String,
    pub start_state: Vec<f64>,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    pub source: TrajectorySource,
}

impl Trajectory {
    pub fn new(
        env_id: &str,
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        source: TrajectorySource,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(CoreError::EmptyInput("trajectory states".into()));
        }
        if states.len() != actions.len() + 1 {
            return Err(CoreError::shape(
                "trajectory (states vs actions)",
                format!("{} states", actions.len() + 1),
                format!("{} states", states.len()),
            ));
        }
        let sd = states[0].len();
        if sd == 0 {
            return Err(CoreError::EmptyInput("state vector".into()));
        }
        for (k, s) in states.iter().enumerate() {
            if s.len() != sd {
                return Err(CoreError::shape(format!("state[{k}]"), sd, s.len()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite(format!("state[{k}]")));
            }
        }
        if let Some(a0) = actions.first() {
            let ad = a0.len();
            for (k, a) in actions.iter().enumerate() {
                if a.len() != ad {
                    return Err(CoreError::shape(format!("action[{k}]"), ad, a.len()));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::NonFinite(format!("action[{k}]")));
                }
            }
        }
        let start_state = states[0].clone();
        Ok(Trajectory {
            env_id: env_id.to_string(),
            start_state,
            states,
            actions,
            source,
        })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, |a| a.len())
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn with_source(mut self, source: TrajectorySource) -> Self {
        self.source = source;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_zero_is_valid() {
        let t = Trajectory::new("e", vec![vec![1.0, 2.0]], vec![], TrajectorySource::Simulated)
            .unwrap();
        assert_eq!(t.horizon(), 0);
        assert_eq!(t.state_dim(), 2);
        assert_eq!(t.action_dim(), 0);
        assert_eq!(t.start_state, vec![1.0, 2.0]);
    }

    #[test]
    fn count_mismatch_rejected() {
        let err = Trajectory::new(
            "e",
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.1], vec![0.2]],
            TrajectorySource::Simulated,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Shape { .. }));
    }

    #[test]
    fn ragged_states_rejected() {
        let err = Trajectory::new(
            "e",
            vec![vec![0.0, 1.0], vec![1.0]],
            vec![vec![0.1]],
            TrajectorySource::Simulated,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Shape { .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let err = Trajectory::new(
            "e",
            vec![vec![0.0], vec![f64::INFINITY]],
            vec![vec![0.1]],
            TrajectorySource::Simulated,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::NonFinite(_)));
    }
}
