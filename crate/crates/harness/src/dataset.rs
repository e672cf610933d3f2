//! Target-system datasets and their on-disk format.
//!
//! A dataset is the "real system" side of a calibration problem: trajectories
//! rolled out on an environment whose true parameters the estimators never
//! see. Each (environment, variant) pair owes three pairwise-disjoint splits
//! drawn from distinct seed ranges, all sharing one true parameter vector.
//!
//! Files are line-delimited JSON: one header line, then one line per
//! trajectory. Every float is written as decimal text with 17 significant
//! digits, which round-trips f64 exactly, so regenerating or re-saving a
//! dataset reproduces it byte for byte.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sipe_core::rng::{mix, rng, seed_for};
use sipe_core::sim::{env_spec, make_env_phys, EnvSpec};
use sipe_core::space::ParamDef;
use sipe_core::trajectory::{Trajectory, TrajectorySource};
use sipe_core::{CoreError, Result};
use sipe_estimators::policy::LinearPolicy;

pub const FORMAT_VERSION: u32 = 1;

/// Canonical-truth stream for the `default` variant; deliberately not derived
/// from the run seed so every run calibrates the same published system.
const DEFAULT_TRUTH_STREAM: u64 = 0xC0FF_EE00;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Reference,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Reference, Split::Validation, Split::Test];

    /// Start-state stream offset; splits never share a stream because
    /// per-split trajectory counts stay far below the offset spacing.
    fn stream_offset(&self) -> u64 {
        match self {
            Split::Reference => 0,
            Split::Validation => 10_000,
            Split::Test => 20_000,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Split::Reference => "reference",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Split {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| CoreError::invalid("split", format!("`{s}` (valid: reference, validation, test)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The fixed canonical system, identical across runs and seeds.
    Default,
    /// True parameters drawn uniformly inside the declared ranges.
    InDistribution,
    /// One parameter pushed past its declared range; the estimator search
    /// space stays the unit cube, so the best reachable answer is the clamp.
    OutOfDistribution,
}

impl Variant {
    pub const ALL: [Variant; 3] =
        [Variant::Default, Variant::InDistribution, Variant::OutOfDistribution];

    pub fn id(&self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::InDistribution => "in_distribution",
            Variant::OutOfDistribution => "out_of_distribution",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.id() == s).ok_or_else(|| {
            CoreError::invalid(
                "variant",
                format!("`{s}` (valid: default, in_distribution, out_of_distribution)"),
            )
        })
    }
}

/// How trajectory actions are produced.
pub enum TrajSource {
    /// Piecewise-constant random excitation within the action bound.
    Scripted,
    /// A trained policy acting on the target system.
    Policy(LinearPolicy),
}

impl TrajSource {
    fn label(&self) -> &'static str {
        match self {
            TrajSource::Scripted => "scripted",
            TrajSource::Policy(_) => "policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajRecord {
    pub traj: Trajectory,
    /// "scripted" or "policy".
    pub source: String,
    /// Start-state stream; recorded so a single trajectory can be replayed.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env_id: String,
    pub split: Split,
    pub variant: Variant,
    /// Stored in physical units, unclamped; out-of-distribution truths lie
    /// outside the declared ranges.
    pub true_theta_physical: Vec<f64>,
    pub records: Vec<TrajRecord>,
}

impl Dataset {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.records.iter().map(|r| r.traj.clone()).collect()
    }

    /// True parameters mapped to the unit cube without clamping; components
    /// outside [0, 1] mark an out-of-distribution truth.
    pub fn true_theta_normalized(&self) -> Result<Vec<f64>> {
        let spec = env_spec(&self.env_id)?;
        normalize_unclamped(&spec, &self.true_theta_physical)
    }
}

pub fn normalize_unclamped(spec: &EnvSpec, phys: &[f64]) -> Result<Vec<f64>> {
    let params = spec.space.params();
    if phys.len() != params.len() {
        return Err(CoreError::shape("physical parameters", params.len(), phys.len()));
    }
    Ok(phys
        .iter()
        .zip(params)
        .map(|(v, p)| (v - p.low) / (p.high - p.low))
        .collect())
}

/// True physical parameters for an (environment, variant) pair. The default
/// variant ignores `master_seed`; the other two derive from it.
pub fn true_theta_physical(env_id: &str, variant: Variant, master_seed: u64) -> Result<Vec<f64>> {
    let spec = env_spec(env_id)?;
    let params = spec.space.params();
    let dim = params.len();
    let from_unit = |u: Vec<f64>| -> Vec<f64> {
        u.iter().zip(params).map(|(t, p)| p.low + t * (p.high - p.low)).collect()
    };
    match variant {
        Variant::Default => {
            let mut r = rng(seed_for(DEFAULT_TRUTH_STREAM, env_id));
            // interior, irregular values; away from range edges and midpoints
            Ok(from_unit((0..dim).map(|_| 0.15 + 0.7 * r.gen::<f64>()).collect()))
        }
        Variant::InDistribution => {
            let mut r = rng(seed_for(master_seed, &format!("truth-{env_id}-in_distribution")));
            Ok(from_unit((0..dim).map(|_| r.gen::<f64>()).collect()))
        }
        Variant::OutOfDistribution => {
            let mut r = rng(seed_for(master_seed, &format!("truth-{env_id}-out_of_distribution")));
            let mut phys = from_unit((0..dim).map(|_| r.gen::<f64>()).collect());
            let j = r.gen_range(0..dim);
            phys[j] = params[j].high + 0.1 * (params[j].high - params[j].low);
            Ok(phys)
        }
    }
}

fn scripted_actions(spec: &EnvSpec, horizon: usize, seed: u64) -> Vec<Vec<f64>> {
    const HOLD: usize = 5;
    let mut r = rng(seed);
    let mut current = vec![0.0; spec.action_dim];
    let mut actions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if t % HOLD == 0 && spec.action_bound > 0.0 {
            for a in current.iter_mut() {
                *a = r.gen_range(-spec.action_bound..=spec.action_bound);
            }
        }
        actions.push(current.clone());
    }
    actions
}

/// Generate one dataset split. Reruns with identical arguments produce
/// identical trajectories (and identical file bytes once saved).
pub fn generate(
    env_id: &str,
    variant: Variant,
    split: Split,
    n_traj: usize,
    horizon: usize,
    master_seed: u64,
    source: &TrajSource,
) -> Result<Dataset> {
    if n_traj == 0 {
        return Err(CoreError::EmptyInput("dataset trajectory count".into()));
    }
    if horizon == 0 {
        return Err(CoreError::EmptyInput("dataset horizon".into()));
    }
    let spec = env_spec(env_id)?;
    let phys = true_theta_physical(env_id, variant, master_seed)?;
    let base = seed_for(master_seed, &format!("data-{env_id}-{variant}"));
    let model = make_env_phys(env_id, &phys, base)?;

    let mut records = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let stream = split.stream_offset() + i as u64;
        let start = model.sample_start(stream);
        let tau = match source {
            TrajSource::Scripted => {
                let actions =
                    scripted_actions(&spec, horizon, mix(seed_for(base, "exciter"), stream));
                model.rollout_actions(&start, &actions)?
            }
            TrajSource::Policy(p) => model.rollout(&start, p, horizon)?,
        }
        .with_source(TrajectorySource::Reference);
        records.push(TrajRecord { traj: tau, source: source.label().to_string(), seed: stream });
    }

    Ok(Dataset {
        env_id: env_id.to_string(),
        split,
        variant,
        true_theta_physical: phys,
        records,
    })
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format_version: u32,
    env_id: String,
    split: Split,
    variant: Variant,
    param_space: Vec<ParamDef>,
    true_theta_physical: Vec<f64>,
    n_traj: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    start_state: Vec<f64>,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    source: String,
    seed: u64,
}

/// 17 significant digits: enough to reproduce any f64 exactly on parse.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&fmt_f64(n.as_f64().expect("finite json number")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string encodes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key encodes"));
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

/// Serialize with deterministic key order and 17-significant-digit floats.
pub fn canonical_json_line<T: Serialize>(v: &T) -> Result<String> {
    let value =
        serde_json::to_value(v).map_err(|e| CoreError::invalid("json encode", e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &value);
    Ok(out)
}

pub fn to_string(ds: &Dataset) -> Result<String> {
    let spec = env_spec(&ds.env_id)?;
    let header = HeaderLine {
        format_version: FORMAT_VERSION,
        env_id: ds.env_id.clone(),
        split: ds.split,
        variant: ds.variant,
        param_space: spec.space.params().to_vec(),
        true_theta_physical: ds.true_theta_physical.clone(),
        n_traj: ds.records.len(),
    };
    let mut out = canonical_json_line(&header)?;
    out.push('\n');
    for rec in &ds.records {
        let line = RecordLine {
            start_state: rec.traj.start_state.clone(),
            states: rec.traj.states().to_vec(),
            actions: rec.traj.actions().to_vec(),
            source: rec.source.clone(),
            seed: rec.seed,
        };
        out.push_str(&canonical_json_line(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_string(ds)?)?;
    Ok(())
}

pub fn from_str(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| CoreError::EmptyInput("dataset file".into()))?;
    let header: HeaderLine = serde_json::from_str(header_line)
        .map_err(|e| CoreError::invalid("dataset header", e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CoreError::invalid(
            "dataset format_version",
            format!("expected {FORMAT_VERSION}, got {}", header.format_version),
        ));
    }
    let spec = env_spec(&header.env_id)?;
    if header.param_space != spec.space.params() {
        return Err(CoreError::invalid(
            "dataset param_space",
            format!("file disagrees with the current `{}` catalog entry", header.env_id),
        ));
    }
    if header.true_theta_physical.len() != spec.space.dim() {
        return Err(CoreError::shape(
            "dataset true_theta_physical",
            spec.space.dim(),
            header.true_theta_physical.len(),
        ));
    }

    let mut records = Vec::with_capacity(header.n_traj);
    for line in lines {
        let rec: RecordLine = serde_json::from_str(line)
            .map_err(|e| CoreError::invalid("dataset record", e.to_string()))?;
        let traj = Trajectory::new(&header.env_id, rec.states, rec.actions, TrajectorySource::Reference)?;
        if traj.start_state != rec.start_state {
            return Err(CoreError::invalid(
                "dataset record",
                "start_state disagrees with states[0]",
            ));
        }
        if traj.state_dim() != spec.state_dim {
            return Err(CoreError::shape("dataset state dim", spec.state_dim, traj.state_dim()));
        }
        records.push(TrajRecord { traj, source: rec.source, seed: rec.seed });
    }
    if records.len() != header.n_traj {
        return Err(CoreError::invalid(
            "dataset n_traj",
            format!("header says {}, file holds {}", header.n_traj, records.len()),
        ));
    }

    Ok(Dataset {
        env_id: header.env_id,
        split: header.split,
        variant: header.variant,
        true_theta_physical: header.true_theta_physical,
        records,
    })
}

pub fn load(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CoreError::Checkpoint(format!(
            "dataset `{}` is unreadable ({e}); run `sipe gen-data` first"
        , path.display()))
    })?;
    from_str(&text)
}

pub fn dataset_path(out: &Path, env_id: &str, variant: Variant, split: Split) -> PathBuf {
    out.join("data").join(env_id).join(variant.id()).join(format!("{split}.jsonl"))
}

pub fn policy_path(out: &Path, env_id: &str) -> PathBuf {
    out.join("policies").join(format!("{env_id}.json"))
}

/// A trained demonstration policy plus the returns that justify (or refute)
/// its convergence flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub env_id: String,
    pub policy: LinearPolicy,
    pub final_return: f64,
    /// Best generation return seen during training on the fixed environment.
    pub best_return: f64,
    pub floor: f64,
    /// Final floor-shifted return within 80% of the best seen.
    pub converged: bool,
}

pub fn save_policy(out: &Path, file: &PolicyFile) -> Result<PathBuf> {
    let path = policy_path(out, &file.env_id);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(file)
        .map_err(|e| CoreError::invalid("policy encode", e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn load_policy(out: &Path, env_id: &str) -> Result<PolicyFile> {
    let path = policy_path(out, env_id);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CoreError::Checkpoint(format!(
            "no trained policy for `{env_id}` at {}; run `sipe train-policy` for that environment first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CoreError::invalid("policy file", e.to_string()))
}
