//! Meta-learned parameter regression with exact second-order training.
//!
//! Meta-training: each task holds support and query sets mapping trajectory
//! features to the generating parameters. The inner adaptation (plain
//! gradient steps on the support loss) is built as tape nodes, so the outer
//! gradient of the query loss differentiates through the inner update
//! exactly, curvature terms included.
//!
//! Test-time calibration has no labels, only a simulation cost. The network
//! output is pushed through the cost with a finite-difference gradient over
//! the predicted parameters, chained into an exact network backward pass, and
//! the resulting gradient adapts a copy of the weights.

use serde::{Deserialize, Serialize};
use sipe_core::nn::mlp::{mse_loss, Activation, Mlp};
use sipe_core::nn::optim::{OptKind, Optimizer};
use sipe_core::nn::tape::Tape;
use sipe_core::nn::Mat;
use sipe_core::{checkpoint, CoreError, ParamVector, Result};

use crate::features::FeatureSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MamlConfig {
    pub meta_iters: usize,
    pub tasks_per_batch: usize,
    pub k_inner: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            meta_iters: 250,
            tasks_per_batch: 4,
            k_inner: 1,
            inner_lr: 0.005,
            outer_lr: 0.005,
            hidden: 60,
            seed: 0,
        }
    }
}

/// One meta-learning task: feature rows and parameter labels.
#[derive(Debug, Clone)]
pub struct MamlTask {
    pub support_x: Mat,
    pub support_y: Mat,
    pub query_x: Mat,
    pub query_y: Mat,
}

pub trait TaskSampler {
    fn sample(&mut self, idx: u64) -> Result<MamlTask>;
    fn feature_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
}

/// Build the inner-adapted parameter nodes for one task on the tape.
pub fn adapt_on_tape(
    tape: &mut Tape,
    net: &Mlp,
    params: &[sipe_core::nn::tape::NodeId],
    task: &MamlTask,
    k_inner: usize,
    inner_lr: f64,
) -> Vec<sipe_core::nn::tape::NodeId> {
    let mut adapted = params.to_vec();
    for _ in 0..k_inner {
        let sx = tape.leaf(task.support_x.clone());
        let pred = net.forward_tape(tape, sx, &adapted);
        let loss = mse_loss(tape, pred, &task.support_y);
        let grads = tape.backward_graph(loss, &adapted);
        adapted = adapted
            .iter()
            .zip(grads)
            .map(|(&p, g)| match g {
                Some(g) => {
                    let step = tape.scalar_mul(g, inner_lr);
                    tape.sub(p, step)
                }
                None => p,
            })
            .collect();
    }
    adapted
}

/// Meta-train a network of shape [feature_dim, hidden, hidden, param_dim].
/// Returns the trained net and the outer loss per meta-iteration.
pub fn maml_metatrain(
    sampler: &mut dyn TaskSampler,
    cfg: &MamlConfig,
) -> Result<(Mlp, Vec<f64>)> {
    if cfg.meta_iters == 0 || cfg.tasks_per_batch == 0 {
        return Err(CoreError::invalid(
            "maml config",
            "meta_iters and tasks_per_batch must be positive",
        ));
    }
    let sizes = [sampler.feature_dim(), cfg.hidden, cfg.hidden, sampler.param_dim()];
    let mut net = Mlp::new(&sizes, Activation::Tanh, sipe_core::rng::seed_for(cfg.seed, "maml-init"))?;
    let mut opt = Optimizer::new(OptKind::Adam, cfg.outer_lr);
    let mut meta_losses = Vec::with_capacity(cfg.meta_iters);

    for iter in 0..cfg.meta_iters {
        let mut tape = Tape::new();
        let params = net.param_nodes(&mut tape);
        let mut outer: Option<sipe_core::nn::tape::NodeId> = None;
        for t in 0..cfg.tasks_per_batch {
            let task = sampler.sample((iter * cfg.tasks_per_batch + t) as u64)?;
            let adapted = adapt_on_tape(&mut tape, &net, &params, &task, cfg.k_inner, cfg.inner_lr);
            let qx = tape.leaf(task.query_x.clone());
            let qpred = net.forward_tape(&mut tape, qx, &adapted);
            let qloss = mse_loss(&mut tape, qpred, &task.query_y);
            outer = Some(match outer {
                Some(acc) => tape.add(acc, qloss),
                None => qloss,
            });
        }
        let outer = tape.scalar_mul(outer.unwrap(), 1.0 / cfg.tasks_per_batch as f64);
        meta_losses.push(tape.scalar(outer));
        let grads = tape.grad(outer, &params);
        opt.step(net.params_mut(), &grads)?;
    }
    Ok((net, meta_losses))
}

/// A plain supervised inner adaptation on a copy of the net (k gradient
/// steps on the given set). The original net is untouched.
pub fn adapt_supervised(net: &Mlp, x: &Mat, y: &Mat, lr: f64, k: usize) -> Result<Mlp> {
    let mut adapted = net.clone();
    for _ in 0..k {
        let mut tape = Tape::new();
        let params = adapted.param_nodes(&mut tape);
        let xn = tape.leaf(x.clone());
        let pred = adapted.forward_tape(&mut tape, xn, &params);
        let loss = mse_loss(&mut tape, pred, y);
        let grads = tape.grad(loss, &params);
        for (p, g) in adapted.params_mut().iter_mut().zip(&grads) {
            for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= lr * gv;
            }
        }
    }
    Ok(adapted)
}

/// A meta-trained net plus the feature pipeline it was trained under.
#[derive(Debug, Clone)]
pub struct MamlModel {
    pub net: Mlp,
    pub spec: FeatureSpec,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub inner_lr: f64,
}

impl MamlModel {
    pub fn standardize(&self, feat: &[f64]) -> Vec<f64> {
        feat.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Standardized feature matrix for a set of raw feature rows.
    pub fn feature_matrix(&self, raw: &[Vec<f64>]) -> Result<Mat> {
        if raw.is_empty() {
            return Err(CoreError::EmptyInput("feature rows".into()));
        }
        let d = self.spec.len();
        let mut flat = Vec::with_capacity(raw.len() * d);
        for row in raw {
            if row.len() != d {
                return Err(CoreError::shape("feature row", d, row.len()));
            }
            flat.extend(self.standardize(row));
        }
        Ok(Mat::from_vec(raw.len(), d, flat))
    }

    /// Parameter prediction of a given net under this model's pipeline:
    /// row-mean of the net outputs, clamped to the cube.
    pub fn predict_with(&self, net: &Mlp, feats: &Mat) -> Result<ParamVector> {
        let out = net.forward_batch(feats)?;
        let n = out.rows() as f64;
        let mut mean = vec![0.0; out.cols()];
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                mean[c] += out.get(r, c) / n;
            }
        }
        ParamVector::clamped(mean)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut tensors: Vec<(String, Mat)> = Vec::new();
        for (i, p) in self.net.params().iter().enumerate() {
            tensors.push((format!("param{i}"), p.clone()));
        }
        tensors.push(("feat_mean".into(), Mat::from_vec(1, self.feat_mean.len(), self.feat_mean.clone())));
        tensors.push(("feat_std".into(), Mat::from_vec(1, self.feat_std.len(), self.feat_std.clone())));
        let meta = vec![
            self.spec.state_dim as f64,
            self.spec.action_dim as f64,
            self.inner_lr,
            self.net.params().len() as f64,
        ];
        tensors.push(("meta".into(), Mat::from_vec(1, meta.len(), meta)));
        let refs: Vec<(&str, &Mat)> = tensors.iter().map(|(n, m)| (n.as_str(), m)).collect();
        checkpoint::save(path, &refs)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut tensors = checkpoint::load(path)?;
        let meta = checkpoint::take(&mut tensors, "meta")?;
        if meta.len() != 4 {
            return Err(CoreError::Checkpoint("meta tensor must have 4 entries".into()));
        }
        let spec = FeatureSpec {
            state_dim: meta.get(0, 0) as usize,
            action_dim: meta.get(0, 1) as usize,
        };
        let inner_lr = meta.get(0, 2);
        let n_tensors = meta.get(0, 3) as usize;
        let mut params = Vec::with_capacity(n_tensors);
        for i in 0..n_tensors {
            params.push(checkpoint::take(&mut tensors, &format!("param{i}"))?);
        }
        let feat_mean = checkpoint::take(&mut tensors, "feat_mean")?.data().to_vec();
        let feat_std = checkpoint::take(&mut tensors, "feat_std")?.data().to_vec();
        if feat_mean.len() != spec.len() || feat_std.len() != spec.len() {
            return Err(CoreError::Checkpoint(format!(
                "feature stats length {} does not match spec {}",
                feat_mean.len(),
                spec.len()
            )));
        }
        let net = Mlp::from_params(params, Activation::Tanh)?;
        if net.in_dim() != spec.len() {
            return Err(CoreError::Checkpoint(format!(
                "net input {} does not match feature length {}",
                net.in_dim(),
                spec.len()
            )));
        }
        Ok(Self { net, spec, feat_mean, feat_std, inner_lr })
    }
}

/// Central finite-difference gradient of a scalar cost over the cube, with
/// clamped evaluation points. Where clamping collapses both sides the
/// component is zero.
pub fn fd_cost_grad(
    cost_fn: &mut dyn FnMut(&ParamVector) -> Result<f64>,
    theta: &ParamVector,
    h: f64,
) -> Result<Vec<f64>> {
    let base = theta.as_slice();
    let mut g = vec![0.0; theta.dim()];
    for d in 0..theta.dim() {
        let mut up = base.to_vec();
        let mut dn = base.to_vec();
        up[d] = (up[d] + h).min(1.0);
        dn[d] = (dn[d] - h).max(0.0);
        let sep = up[d] - dn[d];
        if sep < 1e-12 {
            continue;
        }
        let cu = cost_fn(&ParamVector::new(up)?)?;
        let cd = cost_fn(&ParamVector::new(dn)?)?;
        g[d] = (cu - cd) / sep;
    }
    Ok(g)
}

/// Cost-driven adaptation. Runs `steps` inner updates on a copy of the
/// meta-trained weights: the cost gradient over the predicted parameters
/// (finite differences) is chained into an exact backward pass through the
/// network. Returns the final estimate and the cost recorded at each step.
/// Budget exhaustion inside `cost_fn` ends adaptation early with the current
/// estimate.
pub fn maml_adapt(
    model: &MamlModel,
    raw_feats: &[Vec<f64>],
    cost_fn: &mut dyn FnMut(&ParamVector) -> Result<f64>,
    steps: usize,
    fd_step: f64,
) -> Result<(ParamVector, Vec<f64>)> {
    let feats = model.feature_matrix(raw_feats)?;
    let mut net = model.net.clone();
    let mut step_costs = Vec::new();

    for _ in 0..steps {
        let theta = model.predict_with(&net, &feats)?;
        let cost_now = match cost_fn(&theta) {
            Ok(c) => c,
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        };
        step_costs.push(cost_now);
        let mut g = match fd_cost_grad(cost_fn, &theta, fd_step) {
            Ok(g) => g,
            Err(CoreError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        };
        // projected-gradient gate at the clamp: a raw prediction outside the
        // cube only feels gradients that point back inside
        let raw_mean = {
            let out = net.forward_batch(&feats)?;
            let n = out.rows() as f64;
            (0..out.cols())
                .map(|c| (0..out.rows()).map(|r| out.get(r, c)).sum::<f64>() / n)
                .collect::<Vec<f64>>()
        };
        for (gd, &raw) in g.iter_mut().zip(&raw_mean) {
            if (raw < 0.0 && *gd > 0.0) || (raw > 1.0 && *gd < 0.0) {
                *gd = 0.0;
            }
        }

        // chain the cost gradient through the network exactly
        let mut tape = Tape::new();
        let params = net.param_nodes(&mut tape);
        let xn = tape.leaf(feats.clone());
        let pred = net.forward_tape(&mut tape, xn, &params);
        let mean_pred = tape.sum_rows(pred);
        let mean_pred = tape.scalar_mul(mean_pred, 1.0 / feats.rows() as f64);
        let g_mat = Mat::from_vec(1, g.len(), g);
        let weighted = tape.mul_const(mean_pred, &g_mat);
        let pseudo = tape.sum_all(weighted);
        let grads = tape.grad(pseudo, &params);
        for (p, gm) in net.params_mut().iter_mut().zip(&grads) {
            for (pv, gv) in p.data_mut().iter_mut().zip(gm.data()) {
                *pv -= model.inner_lr * gv;
            }
        }
    }

    let theta = model.predict_with(&net, &feats)?;
    Ok((theta, step_costs))
}
