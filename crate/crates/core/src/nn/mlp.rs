//! Small fully connected networks with a linear output layer.

use rand::Rng;

use super::tape::{NodeId, Tape};
use super::Mat;
use crate::error::{CoreError, Result};
use crate::rng::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Dense MLP. Hidden layers use `act`; the output layer is linear.
/// Parameters are stored as alternating weight/bias matrices, biases as
/// [1, n] rows.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    act: Activation,
    params: Vec<Mat>,
}

impl Mlp {
    /// Xavier-uniform init, deterministic in `seed`.
    pub fn new(sizes: &[usize], act: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::invalid(
                "mlp sizes",
                "need at least input and output dims",
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::invalid("mlp sizes", "zero-width layer"));
        }
        let mut r = rng(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| r.gen_range(-scale..scale))
                .collect();
            params.push(Mat::from_vec(fan_in, fan_out, data));
            params.push(Mat::zeros(1, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            act,
            params,
        })
    }

    /// Rebuild a network from an alternating [W0, b0, W1, b1, ...] list,
    /// e.g. tensors read back from a checkpoint.
    pub fn from_params(params: Vec<Mat>, act: Activation) -> Result<Self> {
        if params.len() < 2 || params.len() % 2 != 0 {
            return Err(CoreError::invalid(
                "mlp params",
                format!("{} tensors; need an even count of weight/bias pairs", params.len()),
            ));
        }
        let mut sizes = vec![params[0].rows()];
        for l in 0..params.len() / 2 {
            let (w, b) = (&params[2 * l], &params[2 * l + 1]);
            if w.rows() != sizes[l] || b.rows() != 1 || b.cols() != w.cols() {
                return Err(CoreError::shape(
                    format!("mlp layer {l}"),
                    format!("weight [{}, n], bias [1, n]", sizes[l]),
                    format!("weight {:?}, bias {:?}", w.shape(), b.shape()),
                ));
            }
            sizes.push(w.cols());
        }
        Ok(Mlp { sizes, act, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Mat>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(CoreError::shape("mlp params", self.params.len(), params.len()));
        }
        for (new, old) in params.iter().zip(&self.params) {
            if new.shape() != old.shape() {
                return Err(CoreError::shape(
                    "mlp param tensor",
                    format!("{:?}", old.shape()),
                    format!("{:?}", new.shape()),
                ));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn n_scalar_params(&self) -> usize {
        self.params.iter().map(Mat::len).sum()
    }

    /// Plain forward pass on a batch (rows = samples).
    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.in_dim() {
            return Err(CoreError::shape("mlp input", self.in_dim(), x.cols()));
        }
        let mut h = x.clone();
        for l in 0..self.n_layers() {
            let w = &self.params[2 * l];
            let b = &self.params[2 * l + 1];
            let mut z = h.matmul(w);
            for r in 0..z.rows() {
                for c in 0..z.cols() {
                    z.set(r, c, z.get(r, c) + b.get(0, c));
                }
            }
            h = if l + 1 < self.n_layers() {
                match self.act {
                    Activation::Tanh => z.map(f64::tanh),
                    Activation::Relu => z.map(|v| v.max(0.0)),
                }
            } else {
                z
            };
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_batch(&Mat::row(x.to_vec()))?;
        Ok(out.data().to_vec())
    }

    /// Register the current parameters as tape leaves.
    pub fn param_nodes(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Build the forward graph under explicit parameter nodes (which may be
    /// adapted copies rather than the stored parameters).
    pub fn forward_tape(&self, tape: &mut Tape, x: NodeId, params: &[NodeId]) -> NodeId {
        assert_eq!(params.len(), self.params.len(), "param node count");
        let mut h = x;
        for l in 0..self.n_layers() {
            let z = tape.matmul(h, params[2 * l]);
            let zb = tape.add_row_vec(z, params[2 * l + 1]);
            h = if l + 1 < self.n_layers() {
                match self.act {
                    Activation::Tanh => tape.tanh(zb),
                    Activation::Relu => tape.relu(zb),
                }
            } else {
                zb
            };
        }
        h
    }
}

/// Mean squared error between a prediction node and a constant target.
pub fn mse_loss(tape: &mut Tape, pred: NodeId, target: &Mat) -> NodeId {
    let t = tape.leaf(target.clone());
    let d = tape.sub(pred, t);
    let sq = tape.mul(d, d);
    tape.mean_all(sq)
}

/// Binary cross-entropy on logits with constant 0/1 labels, computed stably
/// as mean(softplus(z) - y * z).
pub fn bce_with_logits(tape: &mut Tape, logits: NodeId, labels: &Mat) -> NodeId {
    let sp = tape.softplus(logits);
    let y = tape.leaf(labels.clone());
    let yz = tape.mul(y, logits);
    let d = tape.sub(sp, yz);
    tape.mean_all(d)
}
