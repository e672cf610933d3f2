//! Direct regression from transition triples to parameters.
//!
//! Each timestep of a trajectory contributes one training row
//! (s_t, a_t, s_{t+1}) -> theta. A single affine layer is fit by minibatch
//! SGD; prediction averages the per-timestep outputs of the reference
//! trajectories and clamps to the unit cube.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sipe_core::nn::mlp::{mse_loss, Activation, Mlp};
use sipe_core::nn::optim::{OptKind, Optimizer};
use sipe_core::nn::tape::Tape;
use sipe_core::nn::Mat;
use sipe_core::rng::{rng, seed_for};
use sipe_core::{CoreError, ParamVector, Result, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 320, learning_rate: 0.001, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionModel {
    net: Mlp,
    in_mean: Vec<f64>,
    in_std: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
    n_params: usize,
}

fn transition_rows(tau: &Trajectory) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(tau.horizon());
    for t in 0..tau.horizon() {
        let mut row = tau.states()[t].clone();
        row.extend_from_slice(&tau.actions()[t]);
        row.extend_from_slice(&tau.states()[t + 1]);
        rows.push(row);
    }
    rows
}

impl RegressionModel {
    pub fn in_dim(&self) -> usize {
        2 * self.state_dim + self.action_dim
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.in_mean.iter().zip(&self.in_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Predict parameters for one trajectory: mean of per-timestep affine
    /// outputs, clamped to the cube.
    pub fn predict(&self, tau: &Trajectory) -> Result<ParamVector> {
        if tau.horizon() == 0 {
            return Err(CoreError::EmptyInput("trajectory for prediction".into()));
        }
        if tau.state_dim() != self.state_dim || tau.action_dim() != self.action_dim {
            return Err(CoreError::shape(
                "prediction trajectory dims",
                format!("state {}, action {}", self.state_dim, self.action_dim),
                format!("state {}, action {}", tau.state_dim(), tau.action_dim()),
            ));
        }
        let rows = transition_rows(tau);
        let mut acc = vec![0.0; self.n_params];
        for row in &rows {
            let out = self.net.forward(&self.standardize(row))?;
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        let n = rows.len() as f64;
        ParamVector::clamped(acc.into_iter().map(|a| a / n).collect())
    }

    /// Mean prediction across several references.
    pub fn predict_mean(&self, taus: &[Trajectory]) -> Result<ParamVector> {
        if taus.is_empty() {
            return Err(CoreError::EmptyInput("prediction trajectories".into()));
        }
        let mut acc = vec![0.0; self.n_params];
        for tau in taus {
            for (a, p) in acc.iter_mut().zip(self.predict(tau)?.as_slice()) {
                *a += p;
            }
        }
        let n = taus.len() as f64;
        ParamVector::clamped(acc.into_iter().map(|a| a / n).collect())
    }
}

/// Fit the affine regressor on labeled trajectories. Returns the model and
/// the mean training loss per epoch.
pub fn regress_fit(
    data: &[(Trajectory, ParamVector)],
    cfg: &RegressionConfig,
) -> Result<(RegressionModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput("regression training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(CoreError::invalid(
            "regression config",
            "epochs and batch size must be positive",
        ));
    }
    let state_dim = data[0].0.state_dim();
    let action_dim = data[0].0.action_dim();
    let n_params = data[0].1.dim();
    let in_dim = 2 * state_dim + action_dim;

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<&ParamVector> = Vec::new();
    for (tau, theta) in data {
        if tau.state_dim() != state_dim || tau.action_dim() != action_dim {
            return Err(CoreError::shape(
                "regression trajectory dims",
                format!("state {state_dim}, action {action_dim}"),
                format!("state {}, action {}", tau.state_dim(), tau.action_dim()),
            ));
        }
        if theta.dim() != n_params {
            return Err(CoreError::shape("regression labels", n_params, theta.dim()));
        }
        for row in transition_rows(tau) {
            xs.push(row);
            ys.push(theta);
        }
    }
    if xs.is_empty() {
        return Err(CoreError::EmptyInput("regression rows (all trajectories empty)".into()));
    }

    let n = xs.len() as f64;
    let mut in_mean = vec![0.0; in_dim];
    let mut in_std = vec![0.0; in_dim];
    for d in 0..in_dim {
        let m = xs.iter().map(|r| r[d]).sum::<f64>() / n;
        let v = xs.iter().map(|r| (r[d] - m) * (r[d] - m)).sum::<f64>() / n;
        in_mean[d] = m;
        in_std[d] = v.sqrt().max(1e-8);
    }
    for row in xs.iter_mut() {
        for d in 0..in_dim {
            row[d] = (row[d] - in_mean[d]) / in_std[d];
        }
    }

    // single affine layer
    let mut net = Mlp::new(&[in_dim, n_params], Activation::Tanh, seed_for(cfg.seed, "regress"))?;
    let mut opt = Optimizer::new(OptKind::Sgd, cfg.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut shuffle_rng = rng(seed_for(cfg.seed, "regress-shuffle"));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xb = Vec::with_capacity(chunk.len() * in_dim);
            let mut yb = Vec::with_capacity(chunk.len() * n_params);
            for &i in chunk {
                xb.extend_from_slice(&xs[i]);
                yb.extend_from_slice(ys[i].as_slice());
            }
            let x = Mat::from_vec(chunk.len(), in_dim, xb);
            let y = Mat::from_vec(chunk.len(), n_params, yb);

            let mut tape = Tape::new();
            let params = net.param_nodes(&mut tape);
            let x_node = tape.leaf(x);
            let pred = net.forward_tape(&mut tape, x_node, &params);
            let loss = mse_loss(&mut tape, pred, &y);
            total += tape.value(loss).get(0, 0);
            let grads = tape.grad(loss, &params);
            opt.step(net.params_mut(), &grads)?;
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);
    }

    Ok((
        RegressionModel { net, in_mean, in_std, state_dim, action_dim, n_params },
        epoch_losses,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use sipe_core::sim::make_env;
    use sipe_core::TrajectorySource;

    fn labeled_pendulum_set(n: usize, seed: u64) -> Vec<(Trajectory, ParamVector)> {
        let mut r = rng(seed);
        (0..n)
            .map(|i| {
                let theta =
                    ParamVector::new(vec![r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0)])
                        .unwrap();
                let model = make_env("pendulum", &theta, seed).unwrap();
                let start = model.sample_start(i as u64);
                let actions: Vec<Vec<f64>> =
                    (0..40).map(|_| vec![r.gen_range(-2.0..2.0)]).collect();
                let tau = model
                    .rollout_actions(&start, &actions)
                    .unwrap()
                    .with_source(TrajectorySource::Simulated);
                (tau, theta)
            })
            .collect()
    }

    #[test]
    fn loss_decreases_and_prediction_beats_prior() {
        let data = labeled_pendulum_set(120, 11);
        let cfg = RegressionConfig { epochs: 300, seed: 1, ..RegressionConfig::default() };
        let (model, losses) = regress_fit(&data, &cfg).unwrap();
        assert!(losses.last().unwrap() < &losses[0], "loss did not decrease: {losses:?}");

        // held-out set from fixed parameters
        let truth = ParamVector::new(vec![0.7, 0.3]).unwrap();
        let env = make_env("pendulum", &truth, 99).unwrap();
        let mut r = rng(99);
        let refs: Vec<Trajectory> = (0..4)
            .map(|i| {
                let start = env.sample_start(1000 + i);
                let actions: Vec<Vec<f64>> =
                    (0..40).map(|_| vec![r.gen_range(-2.0..2.0)]).collect();
                env.rollout_actions(&start, &actions).unwrap()
            })
            .collect();
        let pred = model.predict_mean(&refs).unwrap();
        let err: f64 = pred
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        // the cube-center prior is 0.2 off on average for this truth
        assert!(err < 0.2, "mean abs error {err}");
    }

    #[test]
    fn deterministic_fit() {
        let data = labeled_pendulum_set(30, 5);
        let cfg = RegressionConfig { epochs: 3, seed: 2, ..RegressionConfig::default() };
        let (_, l1) = regress_fit(&data, &cfg).unwrap();
        let (_, l2) = regress_fit(&data, &cfg).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(regress_fit(&[], &RegressionConfig::default()).is_err());
        let data = labeled_pendulum_set(2, 1);
        let bad = RegressionConfig { epochs: 0, ..RegressionConfig::default() };
        assert!(regress_fit(&data, &bad).is_err());
    }

    #[test]
    fn predict_checks_dims() {
        let data = labeled_pendulum_set(10, 3);
        let cfg = RegressionConfig { epochs: 2, seed: 0, ..RegressionConfig::default() };
        let (model, _) = regress_fit(&data, &cfg).unwrap();
        let wrong = Trajectory::new(
            "x",
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![vec![0.0]],
            TrajectorySource::Simulated,
        )
        .unwrap();
        assert!(model.predict(&wrong).is_err());
    }
}
