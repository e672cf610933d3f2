//! The benchmark runner: one calibration per (estimator, environment, seed)
//! cell, a transfer pass that re-uses stored estimates, and policy training
//! for demonstration data.
//!
//! Every cell runs under its own simulator-step budget of identical size, so
//! no estimator can outspend another. A crashing or erroring estimator marks
//! its cell failed and the run carries on; missing inputs (datasets,
//! policies, estimates) abort with an error naming the step that produces
//! them.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use sipe_core::rng::{mix, rng, seed_for};
use sipe_core::sim::{env_spec, SimBudget};
use sipe_core::{CoreError, ParamVector, Result};
use sipe_estimators::adr::{adr_calibrate, AdrConfig};
use sipe_estimators::bayesopt::{bayesopt_calibrate, BayesOptConfig};
use sipe_estimators::bayessim::{bayessim_train, BayesSimConfig};
use sipe_estimators::cost::{simulate_refs, CalibTarget, RefTraj, RewardMode};
use sipe_estimators::features::{featurize, FeatureSpec};
use sipe_estimators::maml::{
    maml_adapt, maml_metatrain, MamlConfig, MamlModel, MamlTask, TaskSampler,
};
use sipe_estimators::policy::{
    cem_train, transfer_score, CemConfig, EnvSampler, EstimateEnv, FixedEnv, TransferConfig,
};
use sipe_estimators::regression::{regress_fit, RegressionConfig};
use sipe_estimators::simopt::{simopt_calibrate, SimOptConfig};
use sipe_estimators::Estimate;
use sipe_core::nn::Mat;
use sipe_core::trajectory::Trajectory;

use crate::config::{
    BenchConfig, EstimatorKind, RewardModeCfg, TrajectorySource, TransferSection,
};
use crate::dataset::{
    self, load_policy, true_theta_physical, Dataset, PolicyFile, Split, Variant,
};
use crate::score::{
    accuracy, CellResult, CellStatus, RunSpec, ScoreReport, TransferCell, TransferReport,
};
use crate::store::{run_id_for, RunStore};

/// Everything a run needs beyond the config file.
pub struct RunContext {
    pub cfg: BenchConfig,
    pub out: PathBuf,
    pub master_seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub jobs: usize,
}

impl RunContext {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if self.jobs > 0 {
            b = b.num_threads(self.jobs);
        }
        b.build().map_err(|e| CoreError::invalid("thread pool", e.to_string()))
    }
}

pub fn build_run_spec(cfg: &BenchConfig, master_seed: u64) -> Result<RunSpec> {
    let envs = cfg.active_envs();
    let mut n_reference = BTreeMap::new();
    let mut n_train = BTreeMap::new();
    let mut horizons = BTreeMap::new();
    for env in &envs {
        n_reference.insert(env.clone(), cfg.n_reference_for(env));
        n_train.insert(env.clone(), cfg.n_train_for(env));
        horizons.insert(env.clone(), cfg.horizon_for(env)?);
    }
    let mut spec = RunSpec {
        run_id: String::new(),
        master_seed,
        profile: cfg.run.profile,
        split: cfg.calibration_split(),
        variant: cfg.run.variant,
        envs,
        estimators: cfg.active_estimators(),
        seeds: cfg.run.seeds,
        trajectory_source: cfg.run.trajectory_source,
        reward_mode: cfg.run.reward_mode,
        calib_budget: cfg.run.calib_budget,
        n_reference,
        n_train,
        horizons,
    };
    spec.run_id = run_id_for(&spec)?;
    Ok(spec)
}

fn uniform_theta(r: &mut rand_chacha::ChaCha8Rng, dim: usize) -> ParamVector {
    ParamVector::new((0..dim).map(|_| r.gen_range(0.0..=1.0)).collect())
        .expect("uniform draw stays in the cube")
}

/// Simulated (trajectory, theta) training pairs for the dataset-trained
/// estimators, replaying reference actions under random parameters. Stops
/// early once the budget is gone; at least two pairs must fit.
fn sim_pairs(
    env_id: &str,
    refs: &[RefTraj],
    n: usize,
    seed: u64,
    budget: &SimBudget,
) -> Result<Vec<(Trajectory, ParamVector)>> {
    let dim = env_spec(env_id)?.space.dim();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut r = rng(mix(seed_for(seed, "train-pairs"), k as u64));
        let theta = uniform_theta(&mut r, dim);
        let slice = std::slice::from_ref(&refs[k % refs.len()]);
        match simulate_refs(env_id, &theta, slice, seed_for(seed, "pair-sim"), budget) {
            Ok(mut taus) => out.push((taus.pop().expect("one ref in, one sim out"), theta)),
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    if out.len() < 2 {
        return Err(CoreError::invalid(
            "training pairs",
            format!("budget allowed only {} simulations; need at least 2", out.len()),
        ));
    }
    Ok(out)
}

/// Meta-task source backed by the simulator. Tasks are cached; once the
/// budget is exhausted the sampler recycles old tasks instead of simulating,
/// so meta-training finishes without spending steps it does not have.
struct SimTaskSampler<'a> {
    env_id: &'a str,
    refs: &'a [RefTraj],
    fspec: FeatureSpec,
    dim: usize,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
    seed: u64,
    budget: &'a SimBudget,
    cache: Vec<MamlTask>,
}

impl SimTaskSampler<'_> {
    fn standardized_row(&self, tau: &Trajectory) -> Result<Mat> {
        let raw = featurize(&self.fspec, tau)?;
        let row: Vec<f64> = raw
            .iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        Ok(Mat::from_vec(1, row.len(), row))
    }

    fn fresh_task(&self, idx: u64) -> Result<MamlTask> {
        let mut r = rng(mix(seed_for(self.seed, "maml-task"), idx));
        let theta = uniform_theta(&mut r, self.dim);
        let i = idx as usize % self.refs.len();
        let j = (idx as usize + 1) % self.refs.len();
        let support = simulate_refs(
            self.env_id,
            &theta,
            std::slice::from_ref(&self.refs[i]),
            seed_for(self.seed, "maml-sim"),
            self.budget,
        )?;
        let query = simulate_refs(
            self.env_id,
            &theta,
            std::slice::from_ref(&self.refs[j]),
            seed_for(self.seed, "maml-sim"),
            self.budget,
        )?;
        let y = Mat::from_vec(1, self.dim, theta.as_slice().to_vec());
        Ok(MamlTask {
            support_x: self.standardized_row(&support[0])?,
            support_y: y.clone(),
            query_x: self.standardized_row(&query[0])?,
            query_y: y,
        })
    }
}

impl TaskSampler for SimTaskSampler<'_> {
    fn sample(&mut self, idx: u64) -> Result<MamlTask> {
        match self.fresh_task(idx) {
            Ok(task) => {
                self.cache.push(task.clone());
                Ok(task)
            }
            Err(CoreError::BudgetExhausted { .. }) if !self.cache.is_empty() => {
                Ok(self.cache[idx as usize % self.cache.len()].clone())
            }
            Err(e) => Err(e),
        }
    }

    fn feature_dim(&self) -> usize {
        self.fspec.len()
    }

    fn param_dim(&self) -> usize {
        self.dim
    }
}

fn feature_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for d in 0..dim {
            mean[d] += r[d] / n;
        }
    }
    let mut std = vec![0.0; dim];
    for r in rows {
        for d in 0..dim {
            std[d] += (r[d] - mean[d]) * (r[d] - mean[d]) / n;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt().max(1e-8);
    }
    (mean, std)
}

fn maml_estimate(
    env_id: &str,
    refs: Vec<RefTraj>,
    section: &crate::config::MamlSection,
    budget: &SimBudget,
    seed: u64,
) -> Result<Estimate> {
    let fspec = FeatureSpec::for_env(env_id)?;
    let dim = env_spec(env_id)?.space.dim();

    // frozen standardization stats from a probe batch
    let probe_n = 32;
    let mut probe_rows = Vec::with_capacity(probe_n);
    for k in 0..probe_n {
        let mut r = rng(mix(seed_for(seed, "maml-probe"), k as u64));
        let theta = uniform_theta(&mut r, dim);
        let slice = std::slice::from_ref(&refs[k % refs.len()]);
        match simulate_refs(env_id, &theta, slice, seed_for(seed, "maml-sim"), budget) {
            Ok(taus) => probe_rows.push(featurize(&fspec, &taus[0])?),
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    if probe_rows.len() < 2 {
        return Err(CoreError::invalid(
            "maml probe",
            format!("budget allowed only {} probe simulations; need at least 2", probe_rows.len()),
        ));
    }
    let (feat_mean, feat_std) = feature_stats(&probe_rows);

    let mut sampler = SimTaskSampler {
        env_id,
        refs: &refs,
        fspec: fspec.clone(),
        dim,
        feat_mean: feat_mean.clone(),
        feat_std: feat_std.clone(),
        seed,
        budget,
        cache: Vec::new(),
    };
    let meta_cfg = MamlConfig {
        meta_iters: section.meta_iters,
        tasks_per_batch: section.tasks_per_batch,
        k_inner: section.k_inner,
        inner_lr: section.inner_lr,
        outer_lr: section.outer_lr,
        hidden: section.hidden,
        seed,
    };
    let (net, _meta_losses) = maml_metatrain(&mut sampler, &meta_cfg)?;
    let model = MamlModel { net, spec: fspec.clone(), feat_mean, feat_std, inner_lr: section.inner_lr };

    let raw_feats: Vec<Vec<f64>> = refs
        .iter()
        .map(|r| featurize(&fspec, &r.tau))
        .collect::<Result<_>>()?;
    let target = CalibTarget::new(env_id, refs, budget, RewardMode::Mse, seed)?;
    let mut cost_fn = |theta: &ParamVector| target.cost(theta);
    let (theta, _costs) =
        maml_adapt(&model, &raw_feats, &mut cost_fn, section.adapt_steps, section.fd_step)?;
    Ok(Estimate::point(theta))
}

fn cell_estimate(
    cfg: &BenchConfig,
    estimator: EstimatorKind,
    env_id: &str,
    refs: Vec<RefTraj>,
    budget: &SimBudget,
    seed: u64,
) -> Result<Estimate> {
    let reward_mode = match cfg.run.reward_mode {
        RewardModeCfg::Mse => RewardMode::Mse,
        RewardModeCfg::Learned => RewardMode::Learned,
    };
    match estimator {
        EstimatorKind::Regression => {
            let n = cfg.n_train_for(env_id);
            let pairs = sim_pairs(env_id, &refs, n, seed, budget)?;
            let s = &cfg.estimators.regression;
            let rc = RegressionConfig {
                epochs: s.epochs,
                batch_size: s.batch_size,
                learning_rate: s.learning_rate,
                seed,
            };
            let (model, _losses) = regress_fit(&pairs, &rc)?;
            let taus: Vec<Trajectory> = refs.into_iter().map(|r| r.tau).collect();
            Ok(Estimate::point(model.predict_mean(&taus)?))
        }
        EstimatorKind::Bayesopt => {
            let s = &cfg.estimators.bayesopt;
            let bc = BayesOptConfig {
                proposals: s.proposals,
                init_random: s.init_random,
                candidates_per_round: s.candidates_per_round,
                kappa: s.kappa,
                xi: s.xi,
                length_scale: s.length_scale,
                signal_std: s.signal_std,
                noise_std: s.noise_std,
                seed,
            };
            let target = CalibTarget::new(env_id, refs, budget, RewardMode::Mse, seed)?;
            Ok(bayesopt_calibrate(&target, &bc)?.estimate())
        }
        EstimatorKind::Maml => maml_estimate(env_id, refs, &cfg.estimators.maml, budget, seed),
        EstimatorKind::Simopt => {
            let s = &cfg.estimators.simopt;
            let sc = SimOptConfig {
                iterations: s.iterations,
                particles: s.particles,
                epsilon: s.epsilon,
                init_var: s.init_var,
                var_floor: s.var_floor,
                seed,
            };
            let mut target = CalibTarget::new(env_id, refs, budget, reward_mode, seed)?;
            Ok(simopt_calibrate(&mut target, &sc)?.estimate())
        }
        EstimatorKind::Adr => {
            let s = &cfg.estimators.adr;
            let ac = AdrConfig {
                iterations: s.iterations,
                particles: s.particles,
                pairs: s.pairs,
                sigma: s.sigma,
                step_size: s.step_size,
                temperature: s.temperature,
                fixed_bandwidth: s.fixed_bandwidth,
                seed,
            };
            let mut target = CalibTarget::new(env_id, refs, budget, reward_mode, seed)?;
            Ok(adr_calibrate(&mut target, &ac)?.estimate())
        }
        EstimatorKind::Bayessim => {
            let n = cfg.n_train_for(env_id);
            let pairs = sim_pairs(env_id, &refs, n, seed, budget)?;
            let s = &cfg.estimators.bayessim;
            let bc = BayesSimConfig {
                components: s.components,
                hidden: s.hidden,
                epochs: s.epochs,
                batch_size: s.batch_size,
                learning_rate: s.learning_rate,
                seed,
            };
            let (model, _losses) = bayessim_train(&pairs, &bc)?;
            let taus: Vec<Trajectory> = refs.into_iter().map(|r| r.tau).collect();
            let density = model.posterior(&taus)?;
            Ok(Estimate::Posterior { density })
        }
    }
}

struct CellJob {
    env_id: String,
    estimator: EstimatorKind,
    seed_index: u32,
}

fn run_cell(
    cfg: &BenchConfig,
    job: &CellJob,
    dataset: &Dataset,
    policy: Option<&PolicyFile>,
    master_seed: u64,
) -> (CellResult, Option<Estimate>) {
    let cap = cfg.run.calib_budget;
    let budget = SimBudget::new(cap);
    let seed = mix(
        seed_for(master_seed, &format!("cell-{}-{}", job.estimator, job.env_id)),
        job.seed_index as u64,
    );
    let n_ref = cfg.n_reference_for(&job.env_id).min(dataset.records.len());
    let refs: Vec<RefTraj> = dataset.records[..n_ref]
        .iter()
        .map(|r| RefTraj { tau: r.traj.clone(), policy: policy.map(|p| p.policy.clone()) })
        .collect();

    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        cell_estimate(cfg, job.estimator, &job.env_id, refs, &budget, seed)
    }));
    let wall_time_s = started.elapsed().as_secs_f64();
    let steps_used = budget.used();

    let estimate = match outcome {
        Ok(Ok(est)) => est,
        Ok(Err(e)) => {
            let cell = CellResult::failed(
                job.estimator,
                &job.env_id,
                job.seed_index,
                e.to_string(),
                wall_time_s,
                steps_used,
                cap,
            );
            return (cell, None);
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "estimator panicked".to_string());
            let cell = CellResult::failed(
                job.estimator,
                &job.env_id,
                job.seed_index,
                format!("panic: {msg}"),
                wall_time_s,
                steps_used,
                cap,
            );
            return (cell, None);
        }
    };

    let truth = match dataset.true_theta_normalized() {
        Ok(t) => t,
        Err(e) => {
            let cell = CellResult::failed(
                job.estimator,
                &job.env_id,
                job.seed_index,
                e.to_string(),
                wall_time_s,
                steps_used,
                cap,
            );
            return (cell, None);
        }
    };
    let Some(best) = estimate.best_theta() else {
        let cell = CellResult::failed(
            job.estimator,
            &job.env_id,
            job.seed_index,
            "estimate carries no parameters".to_string(),
            wall_time_s,
            steps_used,
            cap,
        );
        return (cell, None);
    };
    let acc_best = match accuracy(best.as_slice(), &truth) {
        Ok(a) => a,
        Err(e) => {
            let cell = CellResult::failed(
                job.estimator,
                &job.env_id,
                job.seed_index,
                e.to_string(),
                wall_time_s,
                steps_used,
                cap,
            );
            return (cell, None);
        }
    };
    let (theta_mean, acc_mean) = if job.estimator.is_particle_method() {
        match estimate.mean_theta() {
            Some(m) => {
                let a = accuracy(m.as_slice(), &truth).ok();
                (Some(m.as_slice().to_vec()), a)
            }
            None => (None, None),
        }
    } else {
        (None, None)
    };

    // demonstration cells converge by construction; learned-policy cells
    // inherit the policy's own convergence
    let converged = match cfg.run.trajectory_source {
        TrajectorySource::Demonstrations => true,
        TrajectorySource::LearnedPolicy => policy.map(|p| p.converged).unwrap_or(false),
    };

    let cell = CellResult {
        estimator: job.estimator,
        env_id: job.env_id.clone(),
        seed_index: job.seed_index,
        status: CellStatus::Ok,
        accuracy: Some(acc_best),
        accuracy_mean: acc_mean,
        theta_best: Some(best.as_slice().to_vec()),
        theta_mean,
        converged,
        wall_time_s,
        steps_used,
        steps_cap: cap,
    };
    (cell, Some(estimate))
}

fn required_source(source: TrajectorySource) -> &'static str {
    match source {
        TrajectorySource::Demonstrations => "scripted",
        TrajectorySource::LearnedPolicy => "policy",
    }
}

fn load_run_datasets(ctx: &RunContext, spec: &RunSpec) -> Result<BTreeMap<String, Dataset>> {
    let mut datasets = BTreeMap::new();
    for env in &spec.envs {
        let path = dataset::dataset_path(&ctx.out, env, spec.variant, spec.split);
        let ds = dataset::load(&path)?;
        if ds.env_id != *env || ds.split != spec.split || ds.variant != spec.variant {
            return Err(CoreError::invalid(
                "dataset",
                format!("{} holds {}/{}/{}", path.display(), ds.env_id, ds.variant, ds.split),
            ));
        }
        let want = required_source(spec.trajectory_source);
        if let Some(bad) = ds.records.iter().find(|r| r.source != want) {
            return Err(CoreError::Checkpoint(format!(
                "dataset {} has `{}` trajectories but the run wants `{want}`; \
                 regenerate it with `sipe gen-data --source {want}`",
                path.display(),
                bad.source
            )));
        }
        let n_ref = spec.n_reference.get(env).copied().unwrap_or(0);
        if ds.records.len() < n_ref {
            return Err(CoreError::invalid(
                "dataset",
                format!(
                    "{} holds {} trajectories but the run needs {n_ref}; regenerate with a larger --n",
                    path.display(),
                    ds.records.len()
                ),
            ));
        }
        datasets.insert(env.clone(), ds);
    }
    Ok(datasets)
}

/// Execute every cell, persist the score report and per-cell estimates, and
/// return the report.
pub fn run_calibration(ctx: &RunContext) -> Result<ScoreReport> {
    let spec = build_run_spec(&ctx.cfg, ctx.master_seed)?;
    let datasets = load_run_datasets(ctx, &spec)?;
    let policy = match spec.trajectory_source {
        TrajectorySource::Demonstrations => None,
        TrajectorySource::LearnedPolicy => {
            let mut by_env = BTreeMap::new();
            for env in &spec.envs {
                by_env.insert(env.clone(), load_policy(&ctx.out, env)?);
            }
            Some(by_env)
        }
    };

    let mut jobs = Vec::new();
    for env in &spec.envs {
        for est in &spec.estimators {
            for s in 0..spec.seeds {
                jobs.push(CellJob { env_id: env.clone(), estimator: *est, seed_index: s });
            }
        }
    }

    let pool = ctx.pool()?;
    let results: Vec<(CellResult, Option<Estimate>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let ds = &datasets[&job.env_id];
                let pf = policy.as_ref().map(|m| &m[&job.env_id]);
                run_cell(&ctx.cfg, job, ds, pf, ctx.master_seed)
            })
            .collect()
    });

    let store = RunStore::new(&ctx.out);
    let mut cells = Vec::with_capacity(results.len());
    for (cell, estimate) in results {
        if let Some(est) = estimate {
            store.save_estimate(&spec.run_id, &cell.env_id, cell.estimator, cell.seed_index, &est)?;
        }
        cells.push(cell);
    }
    let report = ScoreReport::new(spec, cells);
    store.save_report(&report)?;
    Ok(report)
}

fn cem_config_from(section: &TransferSection, seed: u64) -> CemConfig {
    CemConfig {
        population: section.population,
        elites: section.elites,
        iterations: section.cem_iterations,
        episodes_per_candidate: section.episodes_per_candidate,
        seed,
        ..CemConfig::default()
    }
}

/// Train a demonstration policy on an environment's canonical system and
/// persist it. Convergence compares the final floor-shifted return to the
/// best seen during training.
pub fn train_policy(
    out: &Path,
    env_id: &str,
    section: &TransferSection,
    master_seed: u64,
) -> Result<PolicyFile> {
    let spec = env_spec(env_id)?;
    let phys = true_theta_physical(env_id, Variant::Default, master_seed)?;
    let theta = spec.space.normalize(&phys)?;
    let seed = seed_for(master_seed, &format!("train-policy-{env_id}"));
    let mut sampler = FixedEnv { env_id: env_id.into(), theta, seed };
    let budget = SimBudget::unlimited();
    let horizon = if section.horizon > 0 { section.horizon } else { spec.horizon };
    let cem = cem_config_from(section, seed);
    let res = cem_train(&mut sampler, spec.state_dim, spec.action_dim, horizon, &cem, &budget)?;

    let floor = spec.return_floor * horizon as f64 / spec.horizon as f64;
    let best = res.best_returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = best - floor;
    let converged = if denom > 0.0 {
        (res.final_return - floor) >= 0.8 * denom
    } else {
        res.final_return >= best
    };
    let file = PolicyFile {
        env_id: env_id.to_string(),
        policy: res.policy,
        final_return: res.final_return,
        best_return: best,
        floor,
        converged,
    };
    dataset::save_policy(out, &file)?;
    Ok(file)
}

fn transfer_cell(
    ctx: &RunContext,
    store: &RunStore,
    report: &ScoreReport,
    cell: &CellResult,
    truth: &ParamVector,
) -> TransferCell {
    let section = &ctx.cfg.run.transfer;
    let started = Instant::now();
    let run = || -> Result<(f64, f64, f64, f64)> {
        let estimate = store.load_estimate(
            &report.run.run_id,
            &cell.env_id,
            cell.estimator,
            cell.seed_index,
        )?;
        let seed = mix(
            seed_for(ctx.master_seed, &format!("transfer-{}-{}", cell.estimator, cell.env_id)),
            cell.seed_index as u64,
        );
        let spec = env_spec(&cell.env_id)?;
        let horizon = if section.horizon > 0 { section.horizon } else { spec.horizon };
        let tc = TransferConfig {
            cem: cem_config_from(section, seed),
            eval_episodes: section.eval_episodes,
            horizon,
        };
        let budget = if section.budget > 0 {
            SimBudget::new(section.budget)
        } else {
            SimBudget::unlimited()
        };
        // point estimates pin the simulator; populations and posteriors are
        // sampled fresh per episode
        let mut sampler: Box<dyn EnvSampler> = match &estimate {
            Estimate::Point { theta } => Box::new(FixedEnv {
                env_id: cell.env_id.clone(),
                theta: theta.clone(),
                seed,
            }),
            _ => Box::new(EstimateEnv { env_id: cell.env_id.clone(), estimate, seed }),
        };
        let outcome = transfer_score(&cell.env_id, sampler.as_mut(), truth, &tc, seed, &budget)?;
        Ok((outcome.score, outcome.source_return, outcome.target_return, outcome.floor))
    };
    match run() {
        Ok((score, rs, rt, floor)) => TransferCell {
            env_id: cell.env_id.clone(),
            estimator: cell.estimator,
            seed_index: cell.seed_index,
            status: CellStatus::Ok,
            score: Some(score),
            source_return: Some(rs),
            target_return: Some(rt),
            floor: Some(floor),
            converged: score >= 0.8,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        Err(e) => TransferCell {
            env_id: cell.env_id.clone(),
            estimator: cell.estimator,
            seed_index: cell.seed_index,
            status: CellStatus::Failed { message: e.to_string() },
            score: None,
            source_return: None,
            target_return: None,
            floor: None,
            converged: false,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    }
}

/// Transfer pass over a stored calibration run: for every successful cell,
/// train a policy inside its estimate and score it on the true system.
/// Out-of-range truths are clamped to the nearest in-range system, since
/// policies can only be trained against declared parameter ranges.
pub fn run_transfer(ctx: &RunContext, run_id: &str) -> Result<TransferReport> {
    let store = RunStore::new(&ctx.out);
    let report = store.load_report(run_id)?;

    let mut truths: BTreeMap<String, ParamVector> = BTreeMap::new();
    for env in &report.run.envs {
        let path = dataset::dataset_path(&ctx.out, env, report.run.variant, report.run.split);
        let ds = dataset::load(&path)?;
        let norm = ds.true_theta_normalized()?;
        truths.insert(env.clone(), ParamVector::clamped(norm)?);
    }

    let eligible: Vec<&CellResult> = report.cells.iter().filter(|c| c.is_ok()).collect();
    if eligible.is_empty() {
        return Err(CoreError::EmptyInput(format!(
            "run `{run_id}` has no successful cells to transfer"
        )));
    }

    let pool = ctx.pool()?;
    let cells: Vec<TransferCell> = pool.install(|| {
        eligible
            .par_iter()
            .map(|cell| transfer_cell(ctx, &store, &report, cell, &truths[&cell.env_id]))
            .collect()
    });

    let transfer = TransferReport { run_id: run_id.to_string(), cells };
    store.save_transfer(run_id, &transfer)?;
    Ok(transfer)
}

/// Generate and write datasets for the given envs/variants/splits, plus the
/// environment catalog document. Returns the written file paths.
pub fn gen_data(
    ctx: &RunContext,
    envs: &[String],
    variants: &[Variant],
    splits: &[Split],
    n_override: Option<usize>,
    horizon_override: Option<usize>,
    source: TrajectorySource,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for env in envs {
        let n = n_override.unwrap_or_else(|| ctx.cfg.n_reference_for(env));
        let horizon = match horizon_override {
            Some(h) => h,
            None => ctx.cfg.horizon_for(env)?,
        };
        let traj_source = match source {
            TrajectorySource::Demonstrations => dataset::TrajSource::Scripted,
            TrajectorySource::LearnedPolicy => {
                dataset::TrajSource::Policy(load_policy(&ctx.out, env)?.policy)
            }
        };
        for &variant in variants {
            for &split in splits {
                let ds = dataset::generate(
                    env,
                    variant,
                    split,
                    n,
                    horizon,
                    ctx.master_seed,
                    &traj_source,
                )?;
                let path = dataset::dataset_path(&ctx.out, env, variant, split);
                dataset::save(&ds, &path)?;
                written.push(path);
            }
        }
    }
    let catalog_path = ctx.out.join("data").join("catalog.md");
    std::fs::create_dir_all(catalog_path.parent().expect("data dir"))?;
    std::fs::write(&catalog_path, sipe_core::sim::catalog_markdown())?;
    written.push(catalog_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;

    fn quick_cfg() -> BenchConfig {
        BenchConfig::parse(
            r#"
[run]
seeds = 1
envs = ["pendulum"]
estimators = ["regression"]
calib_budget = 40000
n_reference = 3
n_train = 40

[env.pendulum]
horizon = 30

[estimator.regression]
epochs = 10
"#,
        )
        .unwrap()
    }

    fn ctx_with(dir: &Path, cfg: BenchConfig, seed: u64) -> RunContext {
        RunContext { cfg, out: dir.to_path_buf(), master_seed: seed, jobs: 1 }
    }

    #[test]
    fn run_spec_ids_track_configuration() {
        let a = build_run_spec(&quick_cfg(), 0).unwrap();
        let b = build_run_spec(&quick_cfg(), 0).unwrap();
        let c = build_run_spec(&quick_cfg(), 1).unwrap();
        assert_eq!(a.run_id, b.run_id);
        assert_ne!(a.run_id, c.run_id);
        assert_eq!(a.profile, Profile::Benchmark);
        assert_eq!(a.horizons["pendulum"], 30);
    }

    #[test]
    fn missing_dataset_names_gen_data() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx_with(dir.path(), quick_cfg(), 0);
        let err = run_calibration(&ctx).unwrap_err().to_string();
        assert!(err.contains("gen-data"), "{err}");
    }

    #[test]
    fn calibration_produces_cells_estimates_and_scores() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx_with(dir.path(), quick_cfg(), 0);
        let envs = vec!["pendulum".to_string()];
        gen_data(
            &ctx,
            &envs,
            &[Variant::Default],
            &[Split::Reference],
            None,
            None,
            TrajectorySource::Demonstrations,
        )
        .unwrap();

        let report = run_calibration(&ctx).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert!(cell.is_ok(), "{:?}", cell.status);
        assert!(cell.steps_used > 0 && cell.steps_used <= cell.steps_cap);
        assert!(cell.accuracy.is_some());
        report.verify().unwrap();

        let store = RunStore::new(dir.path());
        let est = store
            .load_estimate(&report.run.run_id, "pendulum", EstimatorKind::Regression, 0)
            .unwrap();
        assert!(est.best_theta().is_some());

        // byte-identical reruns of the same configuration
        let again = run_calibration(&ctx).unwrap();
        assert_eq!(again.run.run_id, report.run.run_id);
        for (a, b) in report.cells.iter().zip(&again.cells) {
            assert_eq!(a.theta_best, b.theta_best);
            assert_eq!(a.steps_used, b.steps_used);
        }
    }

    #[test]
    fn estimator_failure_marks_cell_but_run_survives() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_cfg();
        // budget too small for even two training simulations
        cfg.run.calib_budget = 30;
        let ctx = ctx_with(dir.path(), cfg, 0);
        gen_data(
            &ctx,
            &["pendulum".to_string()],
            &[Variant::Default],
            &[Split::Reference],
            None,
            None,
            TrajectorySource::Demonstrations,
        )
        .unwrap();
        let report = run_calibration(&ctx).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert!(!report.cells[0].is_ok());
        assert!(matches!(report.cells[0].status, CellStatus::Failed { .. }));
        report.verify().unwrap();
    }

    #[test]
    fn transfer_requires_calibration_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx_with(dir.path(), quick_cfg(), 0);
        let err = run_transfer(&ctx, "0000000000000000").unwrap_err().to_string();
        assert!(err.contains("calibrate"), "{err}");
    }
}
