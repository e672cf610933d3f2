//! Results store.
//!
//! Layout under the output root:
//!
//! ```text
//! runs/index.json                    run id -> run specification
//! runs/<id>/cells.jsonl              raw per-cell records, one JSON line each
//! runs/<id>/score_report.json        specification + cells + checked aggregates
//! runs/<id>/estimates/<cell>.json    per-cell parameter estimates (for transfer)
//! runs/<id>/plots/<cell>.svg         radar figures
//! runs/<id>/report.md                rendered report
//! runs/<id>/transfer_report.json     transfer scores, when run
//! ```
//!
//! Run ids hash the full run specification, so re-running an identical
//! configuration lands in the same directory and a changed configuration
//! cannot silently overwrite older results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sipe_core::{CoreError, Result};
use sipe_estimators::Estimate;

use crate::config::EstimatorKind;
use crate::dataset::canonical_json_line;
use crate::score::{CellResult, RunSpec, ScoreReport, TransferReport};

fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic run id: a hash of the specification with the id field
/// blanked out.
pub fn run_id_for(spec: &RunSpec) -> Result<String> {
    let mut blank = spec.clone();
    blank.run_id.clear();
    let json = canonical_json_line(&blank)?;
    Ok(format!("{:016x}", fnv1a_64(json.as_bytes())))
}

pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(out: &Path) -> Self {
        RunStore { root: out.to_path_buf() }
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    fn index_path(&self) -> PathBuf {
        self.runs_dir().join("index.json")
    }

    pub fn index(&self) -> Result<BTreeMap<String, RunSpec>> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CoreError::invalid("run index", e.to_string()))
    }

    fn update_index(&self, spec: &RunSpec) -> Result<()> {
        let mut index = self.index()?;
        index.insert(spec.run_id.clone(), spec.clone());
        let text = serde_json::to_string_pretty(&index)
            .map_err(|e| CoreError::invalid("run index encode", e.to_string()))?;
        std::fs::create_dir_all(self.runs_dir())?;
        std::fs::write(self.index_path(), text)?;
        Ok(())
    }

    pub fn save_report(&self, report: &ScoreReport) -> Result<PathBuf> {
        report.verify()?;
        let dir = self.run_dir(&report.run.run_id);
        std::fs::create_dir_all(&dir)?;

        let mut lines = String::new();
        for cell in &report.cells {
            lines.push_str(&canonical_json_line(cell)?);
            lines.push('\n');
        }
        std::fs::write(dir.join("cells.jsonl"), lines)?;

        let json = serde_json::to_string_pretty(report)
            .map_err(|e| CoreError::invalid("score report encode", e.to_string()))?;
        let path = dir.join("score_report.json");
        std::fs::write(&path, json)?;
        self.update_index(&report.run)?;
        Ok(path)
    }

    pub fn load_report(&self, run_id: &str) -> Result<ScoreReport> {
        let path = self.run_dir(run_id).join("score_report.json");
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CoreError::Checkpoint(format!(
                "no score report for run `{run_id}` at {}; run `sipe calibrate` first",
                path.display()
            ))
        })?;
        let report: ScoreReport = serde_json::from_str(&text)
            .map_err(|e| CoreError::invalid("score report", e.to_string()))?;
        report.verify()?;
        Ok(report)
    }

    pub fn load_cells(&self, run_id: &str) -> Result<Vec<CellResult>> {
        let path = self.run_dir(run_id).join("cells.jsonl");
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CoreError::Checkpoint(format!(
                "no raw cells for run `{run_id}` at {}; run `sipe calibrate` first",
                path.display()
            ))
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| CoreError::invalid("cell record", e.to_string()))
            })
            .collect()
    }

    fn estimate_path(
        &self,
        run_id: &str,
        env_id: &str,
        estimator: EstimatorKind,
        seed_index: u32,
    ) -> PathBuf {
        self.run_dir(run_id)
            .join("estimates")
            .join(format!("{env_id}--{estimator}--seed{seed_index}.json"))
    }

    pub fn save_estimate(
        &self,
        run_id: &str,
        env_id: &str,
        estimator: EstimatorKind,
        seed_index: u32,
        estimate: &Estimate,
    ) -> Result<()> {
        let path = self.estimate_path(run_id, env_id, estimator, seed_index);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string(estimate)
            .map_err(|e| CoreError::invalid("estimate encode", e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_estimate(
        &self,
        run_id: &str,
        env_id: &str,
        estimator: EstimatorKind,
        seed_index: u32,
    ) -> Result<Estimate> {
        let path = self.estimate_path(run_id, env_id, estimator, seed_index);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CoreError::Checkpoint(format!(
                "no estimate for cell {env_id}/{estimator} seed {seed_index} of run `{run_id}`; \
                 run `sipe calibrate` before `sipe transfer`"
            ))
        })?;
        serde_json::from_str(&text).map_err(|e| CoreError::invalid("estimate file", e.to_string()))
    }

    pub fn save_transfer(&self, run_id: &str, report: &TransferReport) -> Result<PathBuf> {
        let dir = self.run_dir(run_id);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("transfer_report.json");
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| CoreError::invalid("transfer report encode", e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load_transfer(&self, run_id: &str) -> Result<Option<TransferReport>> {
        let path = self.run_dir(run_id).join("transfer_report.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(path)?;
        let report = serde_json::from_str(&text)
            .map_err(|e| CoreError::invalid("transfer report", e.to_string()))?;
        Ok(Some(report))
    }

    pub fn save_plots(&self, run_id: &str, plots: &[(String, String)]) -> Result<Vec<PathBuf>> {
        let dir = self.run_dir(run_id).join("plots");
        std::fs::create_dir_all(&dir)?;
        let mut out = Vec::with_capacity(plots.len());
        for (stem, svg) in plots {
            let path = dir.join(format!("{stem}.svg"));
            std::fs::write(&path, svg)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn save_rendered_report(&self, run_id: &str, markdown: &str) -> Result<PathBuf> {
        let dir = self.run_dir(run_id);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("report.md");
        std::fs::write(&path, markdown)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::config::{Profile, RewardModeCfg, TrajectorySource};
    use crate::dataset::{Split, Variant};
    use crate::score::{AccuracyVector, CellStatus};
    use sipe_core::ParamVector;

    fn spec(seed: u64) -> RunSpec {
        RunSpec {
            run_id: String::new(),
            master_seed: seed,
            profile: Profile::Benchmark,
            split: Split::Reference,
            variant: Variant::Default,
            envs: vec!["pendulum".into()],
            estimators: vec![EstimatorKind::Adr],
            seeds: 1,
            trajectory_source: TrajectorySource::Demonstrations,
            reward_mode: RewardModeCfg::Mse,
            calib_budget: 1000,
            n_reference: BTreeMap::new(),
            n_train: BTreeMap::new(),
            horizons: BTreeMap::new(),
        }
    }

    #[test]
    fn run_ids_are_deterministic_and_config_sensitive() {
        let a = run_id_for(&spec(1)).unwrap();
        let b = run_id_for(&spec(1)).unwrap();
        let c = run_id_for(&spec(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn report_roundtrip_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let mut run = spec(3);
        run.run_id = run_id_for(&run).unwrap();
        let cell = CellResult {
            estimator: EstimatorKind::Adr,
            env_id: "pendulum".into(),
            seed_index: 0,
            status: CellStatus::Ok,
            accuracy: Some(AccuracyVector { per_param: vec![0.9, 0.8] }),
            accuracy_mean: Some(AccuracyVector { per_param: vec![0.85, 0.75] }),
            theta_best: Some(vec![0.4, 0.6]),
            theta_mean: Some(vec![0.45, 0.55]),
            converged: true,
            wall_time_s: 0.123,
            steps_used: 800,
            steps_cap: 1000,
        };
        let id = run.run_id.clone();
        let report = ScoreReport::new(run, vec![cell]);
        store.save_report(&report).unwrap();

        let back = store.load_report(&id).unwrap();
        assert_eq!(back, report);
        let cells = store.load_cells(&id).unwrap();
        assert_eq!(cells, report.cells);
        assert!(store.index().unwrap().contains_key(&id));
    }

    #[test]
    fn missing_artifacts_name_the_prerequisite() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let err = store.load_report("deadbeef").unwrap_err().to_string();
        assert!(err.contains("calibrate"), "{err}");

        let err = store
            .load_estimate("deadbeef", "pendulum", EstimatorKind::Adr, 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("pendulum/adr"), "{err}");
        assert!(err.contains("seed 0"), "{err}");
    }

    #[test]
    fn estimates_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let est = Estimate::point(ParamVector::new(vec![0.25, 0.75]).unwrap());
        store.save_estimate("r1", "pendulum", EstimatorKind::Bayesopt, 2, &est).unwrap();
        let back = store.load_estimate("r1", "pendulum", EstimatorKind::Bayesopt, 2).unwrap();
        assert_eq!(back.best_theta().unwrap().as_slice(), &[0.25, 0.75]);
    }
}
