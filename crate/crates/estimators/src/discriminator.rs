//! Trajectory-feature discriminator for learned calibration rewards.
//!
//! A small classifier is trained online to tell reference trajectories from
//! simulated ones. Its log-probability of "reference" serves as a reward:
//! simulations that fool the discriminator score closer to zero, anything
//! else is negative. At the two-sample equilibrium the classifier cannot do
//! better than chance and the binary cross-entropy plateaus at ln 2.

use sipe_core::nn::mlp::{bce_with_logits, Activation, Mlp};
use sipe_core::nn::optim::{OptKind, Optimizer};
use sipe_core::nn::tape::Tape;
use sipe_core::nn::Mat;
use sipe_core::{CoreError, Result, Trajectory};

use crate::features::{featurize, FeatureSpec};

const HIDDEN: usize = 32;
const LEARNING_RATE: f64 = 0.001;

#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    opt: Optimizer,
    spec: FeatureSpec,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
    standardized: bool,
    steps: u64,
}

impl Discriminator {
    pub fn new(spec: FeatureSpec, seed: u64) -> Result<Self> {
        let net = Mlp::new(&[spec.len(), HIDDEN, 1], Activation::Tanh, seed)?;
        Ok(Self {
            net,
            opt: Optimizer::new(OptKind::Adam, LEARNING_RATE),
            feat_mean: vec![0.0; spec.len()],
            feat_std: vec![1.0; spec.len()],
            standardized: false,
            spec,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn standardize(&self, feat: &[f64]) -> Vec<f64> {
        feat.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn batch_matrix(&self, taus: &[Trajectory]) -> Result<Mat> {
        let mut rows = Vec::with_capacity(taus.len());
        for tau in taus {
            rows.push(self.standardize(&featurize(&self.spec, tau)?));
        }
        Ok(Mat::from_vec(taus.len(), self.spec.len(), rows.concat()))
    }

    /// One gradient step on a reference-vs-simulated batch. Returns the batch
    /// binary cross-entropy. Feature standardization statistics are frozen
    /// from the first batch so the input distribution the net sees stays
    /// consistent across training.
    pub fn train_step(&mut self, refs: &[Trajectory], sims: &[Trajectory]) -> Result<f64> {
        if refs.is_empty() || sims.is_empty() {
            return Err(CoreError::EmptyInput("discriminator batch".into()));
        }
        if !self.standardized {
            let mut feats = Vec::new();
            for tau in refs.iter().chain(sims) {
                feats.push(featurize(&self.spec, tau)?);
            }
            let n = feats.len() as f64;
            for d in 0..self.spec.len() {
                let mean = feats.iter().map(|f| f[d]).sum::<f64>() / n;
                let var = feats.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
                self.feat_mean[d] = mean;
                self.feat_std[d] = var.sqrt().max(1e-8);
            }
            self.standardized = true;
        }

        let mut x_rows = Vec::new();
        let mut y = Vec::new();
        for tau in refs {
            x_rows.push(self.standardize(&featurize(&self.spec, tau)?));
            y.push(1.0);
        }
        for tau in sims {
            x_rows.push(self.standardize(&featurize(&self.spec, tau)?));
            y.push(0.0);
        }
        let x = Mat::from_vec(x_rows.len(), self.spec.len(), x_rows.concat());
        let targets = Mat::from_vec(y.len(), 1, y);

        let mut tape = Tape::new();
        let params = self.net.param_nodes(&mut tape);
        let x_node = tape.leaf(x);
        let logits = self.net.forward_tape(&mut tape, x_node, &params);
        let loss = bce_with_logits(&mut tape, logits, &targets);
        let loss_val = tape.value(loss).get(0, 0);
        let grads = tape.grad(loss, &params);
        self.opt.step(self.net.params_mut(), &grads)?;
        self.steps += 1;
        Ok(loss_val)
    }

    /// Classifier probability that `tau` is a reference trajectory.
    pub fn prob_ref(&self, tau: &Trajectory) -> Result<f64> {
        let z = self.logit(tau)?;
        Ok(1.0 / (1.0 + (-z).exp()))
    }

    fn logit(&self, tau: &Trajectory) -> Result<f64> {
        if self.steps == 0 {
            return Err(CoreError::invalid(
                "discriminator",
                "queried before any training step",
            ));
        }
        let x = self.batch_matrix(std::slice::from_ref(tau))?;
        Ok(self.net.forward_batch(&x)?.get(0, 0))
    }

    /// Learned reward ln D(tau). Always <= 0; approaches 0 only as the
    /// classifier is fully fooled. Computed as -softplus(-z) for stability.
    pub fn learned_reward(&self, tau: &Trajectory) -> Result<f64> {
        let z = self.logit(tau)?;
        let sp = if -z > 30.0 { -z } else { (1.0 + (-z).exp()).ln() };
        Ok(-sp)
    }
}
