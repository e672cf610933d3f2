//! Scoring primitives: trajectory discrepancy and parameter accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::space::ParamVector;
use crate::trajectory::Trajectory;

/// Tolerance for the start-state agreement check in [`trajectory_mse`].
pub const START_STATE_TOL: f64 = 1e-9;

/// Mean squared state difference between two trajectories, averaged over all
/// `horizon + 1` timesteps and all state dimensions.
///
/// Both trajectories must share horizon and state dimension, and their start
/// states must agree within [`START_STATE_TOL`]. Estimation modes that
/// deliberately compare trajectories with different excitation keep the start
/// check; modes that drop the start constraint entirely (learned rewards) do
/// not call this function at all.
pub fn trajectory_mse(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let max_diff = a
        .start_state
        .iter()
        .zip(&b.start_state)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    if a.start_state.len() != b.start_state.len() || max_diff > START_STATE_TOL {
        return Err(CoreError::StartMismatch {
            max_abs_diff: max_diff,
            tol: START_STATE_TOL,
        });
    }
    trajectory_mse_unchecked_start(a, b)
}

/// Same as [`trajectory_mse`] but without the start-state agreement check.
pub fn trajectory_mse_unchecked_start(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(CoreError::shape("trajectory horizons", a.horizon(), b.horizon()));
    }
    if a.state_dim() != b.state_dim() {
        return Err(CoreError::shape("trajectory state dims", a.state_dim(), b.state_dim()));
    }
    let n = a.states().len() * a.state_dim();
    let mut sum = 0.0;
    for (sa, sb) in a.states().iter().zip(b.states()) {
        for (x, y) in sa.iter().zip(sb) {
            let d = x - y;
            sum += d * d;
        }
    }
    Ok(sum / n as f64)
}

/// Per-parameter accuracies in [0, 1]; 1 means exact recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyVector(Vec<f64>);

impl AccuracyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::EmptyInput("accuracy vector".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(CoreError::invalid(
                    format!("accuracy[{i}]"),
                    format!("{v} not in [0, 1]"),
                ));
            }
        }
        Ok(AccuracyVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-parameter accuracy `1 - |theta_hat_i - theta_true_i]|` in normalized
/// coordinates. Both vectors live in the unit cube, so each component lands
/// in [0, 1] by construction.
pub fn accuracy(theta_hat: &ParamVector, theta_true: &ParamVector) -> Result<AccuracyVector> {
    if theta_hat.dim() != theta_true.dim() {
        return Err(CoreError::shape("accuracy dims", theta_true.dim(), theta_hat.dim()));
    }
    AccuracyVector::new(
        theta_hat
            .as_slice()
            .iter()
            .zip(theta_true.as_slice())
            .map(|(h, t)| 1.0 - (h - t).abs())
            .collect(),
    )
}

/// Aggregation mode over the components of an [`AccuracyVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 3] = [Aggregate::Mean, Aggregate::Min, Aggregate::Max];

    pub fn label(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
        }
    }
}

pub fn aggregate(acc: &AccuracyVector, mode: Aggregate) -> f64 {
    let v = acc.as_slice();
    match mode {
        Aggregate::Mean => v.iter().sum::<f64>() / v.len() as f64,
        Aggregate::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregate::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `max - min` of the per-parameter accuracies.
pub fn spread(acc: &AccuracyVector) -> f64 {
    aggregate(acc, Aggregate::Max) - aggregate(acc, Aggregate::Min)
}
