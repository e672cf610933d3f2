//! Scoring: per-cell accuracy records and their seed aggregates.
//!
//! Accuracy is measured in the normalized parameter cube: per dimension,
//! `1 - |estimate - truth|`, and the scalar accuracy is the mean over
//! dimensions. In-range truths keep every value in [0, 1]; out-of-range
//! truths can push accuracy below zero, which is reported as-is.
//!
//! A score report stores every cell plus aggregates over seeds. Aggregates
//! are pure functions of the cells, recomputed and checked whenever a report
//! is loaded, so a hand-edited summary cannot drift from its raw data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sipe_core::{CoreError, Result};

use crate::config::{EstimatorKind, Profile, RewardModeCfg, TrajectorySource};
use crate::dataset::{Split, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyVector {
    pub per_param: Vec<f64>,
}

impl AccuracyVector {
    pub fn scalar(&self) -> f64 {
        self.per_param.iter().sum::<f64>() / self.per_param.len() as f64
    }
}

/// Per-dimension accuracy of a normalized estimate against a normalized
/// truth. The truth may lie outside [0, 1] for out-of-distribution systems.
pub fn accuracy(estimate_norm: &[f64], truth_norm: &[f64]) -> Result<AccuracyVector> {
    if estimate_norm.is_empty() {
        return Err(CoreError::EmptyInput("estimate".into()));
    }
    if estimate_norm.len() != truth_norm.len() {
        return Err(CoreError::shape("accuracy dims", truth_norm.len(), estimate_norm.len()));
    }
    Ok(AccuracyVector {
        per_param: estimate_norm
            .iter()
            .zip(truth_norm)
            .map(|(e, t)| 1.0 - (e - t).abs())
            .collect(),
    })
}

/// The exact run definition a score report answers for; echoed verbatim into
/// rendered reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub master_seed: u64,
    pub profile: Profile,
    pub split: Split,
    pub variant: Variant,
    pub envs: Vec<String>,
    pub estimators: Vec<EstimatorKind>,
    pub seeds: u32,
    pub trajectory_source: TrajectorySource,
    pub reward_mode: RewardModeCfg,
    /// Simulator-step cap per cell, identical for every estimator.
    pub calib_budget: u64,
    pub n_reference: BTreeMap<String, usize>,
    pub n_train: BTreeMap<String, usize>,
    pub horizons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CellStatus {
    Ok,
    /// The estimator crashed or errored; the run carries on without this cell.
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: EstimatorKind,
    pub env_id: String,
    pub seed_index: u32,
    pub status: CellStatus,
    /// Best-point accuracy (particle methods: best particle by cost).
    pub accuracy: Option<AccuracyVector>,
    /// Population-mean accuracy; particle and posterior methods only.
    pub accuracy_mean: Option<AccuracyVector>,
    /// Normalized parameter estimates backing the accuracies.
    pub theta_best: Option<Vec<f64>>,
    pub theta_mean: Option<Vec<f64>>,
    pub converged: bool,
    pub wall_time_s: f64,
    pub steps_used: u64,
    pub steps_cap: u64,
}

impl CellResult {
    pub fn failed(
        estimator: EstimatorKind,
        env_id: &str,
        seed_index: u32,
        message: String,
        wall_time_s: f64,
        steps_used: u64,
        steps_cap: u64,
    ) -> Self {
        CellResult {
            estimator,
            env_id: env_id.to_string(),
            seed_index,
            status: CellStatus::Failed { message },
            accuracy: None,
            accuracy_mean: None,
            theta_best: None,
            theta_mean: None,
            converged: false,
            wall_time_s,
            steps_used,
            steps_cap,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, CellStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// max - min over seeds.
    pub spread: f64,
}

fn scalar_stats(values: &[f64]) -> Option<ScalarStats> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ScalarStats { mean, min, max, spread: max - min })
}

/// Seed aggregate for one (environment, estimator) pair. Per-parameter
/// vectors are elementwise over succeeded seeds (the three radar polygons);
/// scalar stats summarize the per-seed scalar accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvAggregate {
    pub env_id: String,
    pub estimator: EstimatorKind,
    pub n_seeds: u32,
    pub n_failed: u32,
    pub n_converged: u32,
    pub per_param_min: Option<Vec<f64>>,
    pub per_param_mean: Option<Vec<f64>>,
    pub per_param_max: Option<Vec<f64>>,
    pub scalar: Option<ScalarStats>,
    pub scalar_mean_estimate: Option<ScalarStats>,
    pub total_steps: u64,
    pub max_steps: u64,
    pub total_wall_time_s: f64,
}

fn elementwise(vectors: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = vectors[0].len();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for d in 0..dim {
            min[d] = min[d].min(v[d]);
            max[d] = max[d].max(v[d]);
            mean[d] += v[d] / vectors.len() as f64;
        }
    }
    (min, mean, max)
}

pub fn compute_aggregates(cells: &[CellResult]) -> Vec<EnvAggregate> {
    let mut groups: BTreeMap<(String, String), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((c.env_id.clone(), c.estimator.id().to_string()))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((env_id, _), group)| {
            let estimator = group[0].estimator;
            let ok: Vec<&&CellResult> = group.iter().filter(|c| c.is_ok()).collect();
            let acc_vecs: Vec<&Vec<f64>> = ok
                .iter()
                .filter_map(|c| c.accuracy.as_ref().map(|a| &a.per_param))
                .collect();
            let (ppmin, ppmean, ppmax) = if acc_vecs.is_empty() {
                (None, None, None)
            } else {
                let (a, b, c) = elementwise(&acc_vecs);
                (Some(a), Some(b), Some(c))
            };
            let scalars: Vec<f64> = ok
                .iter()
                .filter_map(|c| c.accuracy.as_ref().map(|a| a.scalar()))
                .collect();
            let mean_scalars: Vec<f64> = ok
                .iter()
                .filter_map(|c| c.accuracy_mean.as_ref().map(|a| a.scalar()))
                .collect();
            EnvAggregate {
                env_id,
                estimator,
                n_seeds: group.len() as u32,
                n_failed: group.iter().filter(|c| !c.is_ok()).count() as u32,
                n_converged: group.iter().filter(|c| c.converged).count() as u32,
                per_param_min: ppmin,
                per_param_mean: ppmean,
                per_param_max: ppmax,
                scalar: scalar_stats(&scalars),
                scalar_mean_estimate: scalar_stats(&mean_scalars),
                total_steps: group.iter().map(|c| c.steps_used).sum(),
                max_steps: group.iter().map(|c| c.steps_used).max().unwrap_or(0),
                total_wall_time_s: group.iter().map(|c| c.wall_time_s).sum(),
            }
        })
        .collect()
}

/// Outcome of training a policy inside one cell's estimate and deploying it
/// on that cell's true system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub env_id: String,
    pub estimator: EstimatorKind,
    pub seed_index: u32,
    pub status: CellStatus,
    pub score: Option<f64>,
    pub source_return: Option<f64>,
    pub target_return: Option<f64>,
    pub floor: Option<f64>,
    /// Score at or above 0.8: the transferred policy recovers most of the
    /// directly trained return.
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Calibration run these transfers were seeded from.
    pub run_id: String,
    pub cells: Vec<TransferCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub run: RunSpec,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<EnvAggregate>,
}

impl ScoreReport {
    pub fn new(run: RunSpec, cells: Vec<CellResult>) -> Self {
        let aggregates = compute_aggregates(&cells);
        ScoreReport { run, cells, aggregates }
    }

    /// Recompute aggregates from the raw cells and demand exact agreement
    /// with what the file claims.
    pub fn verify(&self) -> Result<()> {
        let fresh = compute_aggregates(&self.cells);
        if fresh != self.aggregates {
            return Err(CoreError::invalid(
                "score report",
                "stored aggregates do not match the stored cells",
            ));
        }
        for c in &self.cells {
            if c.steps_cap != self.run.calib_budget {
                return Err(CoreError::invalid(
                    "score report",
                    format!(
                        "cell {}/{} seed {} ran under cap {} instead of the shared {}",
                        c.env_id, c.estimator, c.seed_index, c.steps_cap, self.run.calib_budget
                    ),
                ));
            }
            if c.steps_used > c.steps_cap {
                return Err(CoreError::invalid(
                    "score report",
                    format!(
                        "cell {}/{} seed {} spent {} of {} budgeted steps",
                        c.env_id, c.estimator, c.seed_index, c.steps_used, c.steps_cap
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn aggregate_for(&self, env_id: &str, estimator: EstimatorKind) -> Option<&EnvAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.env_id == env_id && a.estimator == estimator)
    }
}
